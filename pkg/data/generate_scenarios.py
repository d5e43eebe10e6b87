# writes the preset scenarios (seed 0) used by the example manifests
from src.ranopt.scenario import JSON_DIR, PRESETS, ScenarioParams, generate_scenario

for name in PRESETS:
    scenario = generate_scenario(ScenarioParams.preset(name, seed=0))
    path = scenario.to_json(JSON_DIR / f"scenario_{name}.json")
    print(f"{name}: {scenario} -> {path}")

import logging
from pathlib import Path

from dotenv import load_dotenv

from experiment_config import load_config
from harness import emit_results, run_experiment

BASE_DIR = Path(__file__).resolve().parent
load_dotenv(BASE_DIR / ".env")

logger = logging.getLogger(__name__)

PRESETS = {
    "two-gaussian-max": BASE_DIR / "data" / "two_gaussian_max.json",
    "two-gaussian-ave": BASE_DIR / "data" / "two_gaussian_ave.json",
    "changepoint-max": BASE_DIR / "data" / "changepoint_max.json",
}


def choose_preset():
    names = list(PRESETS)
    while True:
        print("\nAvailable presets:")
        for number, name in enumerate(names, 1):
            print(f"{number}. {name}")

        choice = input("\nChoose a preset (enter number or name): ").lower().strip()

        preset_map = {str(number): name for number, name in enumerate(names, 1)}
        preset_map.update({name: name for name in names})

        if choice in preset_map:
            return preset_map[choice]
        print("Invalid choice. Please try again.")


def print_summary(result):
    print(f"\n{'strategy':<14}" + "".join(f"{'n ' + t:>16}{'e_KL ' + t:>18}" for t in result.target_names) + f"{'loss':>14}")
    for strategy in sorted(result.strategies, key=result.realized_loss):
        cells = "".join(f"{n:>16.1f}{e:>18.4e}" for n, e in zip(result.mean_sizes(strategy), result.ekl[strategy]))
        print(f"{strategy:<14}{cells}{result.realized_loss(strategy):>14.4e}")


def main():
    preset = choose_preset()
    config = load_config(PRESETS[preset])
    out_dir = BASE_DIR / "results" / preset

    print(f"\nRunning {preset} ({config.replications} replications)...")
    result = run_experiment(config)
    emit_results(result, out_dir)
    print_summary(result)
    print(f"\nResults written to {out_dir}")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    print("Starting rival sampling experiments...")
    main()

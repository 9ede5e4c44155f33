"""
Automated results pipeline for the FINCO revival study.
Runs the reference, comparison and diagnostic modes for a preset and records
the refresh in the results index database.
"""

import argparse
import sqlite3
import subprocess
import sys
from datetime import datetime
from pathlib import Path

RESULTS_DIR = Path("results")
INDEX_DB = RESULTS_DIR / "index.db"

STEPS = [
    ("compare", "FINCO reconstruction against the split-operator reference"),
    ("branchmap", "Branch maps, caustics and phase scars"),
    ("real_contour_compare", "Real-contour accessibility comparison"),
]


def log(message):
    """Print timestamped log message."""
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    print(f"[{timestamp}] {message}")


def run_command(command, description):
    """Run a command and handle errors."""
    log(f"Starting: {description}")
    try:
        subprocess.run(command, check=True, capture_output=True, text=True)
        log(f"[OK] Completed: {description}")
        return True
    except subprocess.CalledProcessError as e:
        log(f"[ERROR] Failed: {description} (exit code {e.returncode})")
        log(f"Error: {e.stderr.strip().splitlines()[-1] if e.stderr.strip() else 'no output'}")
        return False


def finco_command(preset, mode, output):
    return [sys.executable, "-m", "finco.cli", "run", "--preset", preset, "--mode", mode, "--output", str(output)]


def record_refresh(preset, steps_done, db_path=INDEX_DB):
    """Store the refresh time of a preset in the results index."""
    try:
        db_path.parent.mkdir(parents=True, exist_ok=True)
        conn = sqlite3.connect(db_path)
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS refreshes (
                preset TEXT PRIMARY KEY,
                steps TEXT,
                updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)

        cursor.execute("""
            INSERT OR REPLACE INTO refreshes (preset, steps, updated_at)
            VALUES (?, ?, ?)
        """, (preset, ",".join(steps_done), datetime.now().isoformat()))

        conn.commit()
        conn.close()
        log("[OK] Updated results index")
        return True
    except sqlite3.Error as e:
        log(f"[ERROR] Failed to update results index: {e}")
        return False


def main(argv=None):
    """Execute the full results pipeline for one preset."""
    parser = argparse.ArgumentParser(description="Regenerate result files for a preset.")
    parser.add_argument("preset", nargs="?", default="morse-short")
    parser.add_argument("--skip", action="append", default=[], help="Mode to skip (repeatable)")
    args = parser.parse_args(argv)

    log("=" * 60)
    log(f"Starting results pipeline for preset '{args.preset}'")
    log("=" * 60)

    output = RESULTS_DIR / args.preset
    done = []
    for mode, description in STEPS:
        if mode in args.skip:
            log(f"Skipping: {description}")
            continue
        if not run_command(finco_command(args.preset, mode, output), description):
            log(f"Pipeline failed at {mode} step")
            return 1
        done.append(mode)

    if not record_refresh(args.preset, done):
        log("Warning: Could not update results index, but result files are refreshed")

    log("=" * 60)
    log("[OK] Pipeline completed successfully!")
    log(f"Results written to {output}")
    log("=" * 60)

    return 0


if __name__ == "__main__":
    sys.exit(main())

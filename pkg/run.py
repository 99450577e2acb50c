#!/usr/bin/env python3
"""
Acceptance battery for the sigma2lab laboratory.

Runs every subcommand with its acceptance parameters and writes one CSV per run.
Pass --quick for reduced sample counts.
"""

import os
import sys
from importlib import metadata
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


REQUIRED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings")


def check_environment(out_dir: Path) -> bool:
    """Report the numerical stack and make sure the report directory is writable."""
    missing = []
    for name in REQUIRED_PACKAGES:
        try:
            print(f"   {name} {metadata.version(name)}")
        except metadata.PackageNotFoundError:
            missing.append(name)
    if missing:
        print(f"Error: missing packages {', '.join(missing)}")
        print("   pip install -r requirements.txt")
        return False

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"Error: cannot create {out_dir}: {e}")
        return False
    if not os.access(out_dir, os.W_OK):
        print(f"Error: {out_dir} is not writable")
        return False

    if not (project_root / ".env").exists():
        print("Note: no .env file, running with the built-in tolerances.")
    print()
    return True


def main():
    """Main entry point."""
    quick = "--quick" in sys.argv[1:]
    out_dir = project_root / "reports"
    print("Running the sigma2lab acceptance battery" + (" (quick)" if quick else ""))
    print("=" * 50)

    if not check_environment(out_dir):
        sys.exit(1)

    try:
        from sigma2lab.main import run_suite

        code = run_suite(str(out_dir), quick=quick)
        print("=" * 50)
        print(f"Reports written to {out_dir} (exit code {code})")
        sys.exit(code)

    except ImportError as e:
        print(f"Error: missing dependency - {e}")
        print("Please install dependencies:")
        print("   pip install -r requirements.txt")
        sys.exit(1)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Build the kirchhoff-nehari distributions and check that the bundled presets
made it into the wheel.
"""

import shutil
import subprocess
import sys
import zipfile
from pathlib import Path

PRESETS = ("critical", "decoupled", "doubly_critical", "log_integral", "periodic")


def run_command(command, description):
    """Run a shell command; print its output and return True on success."""
    print(f"\n🔄 {description}...")
    try:
        result = subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed")
        print(f"Error: {e.stderr}")
        return False
    print(f"✅ {description} completed")
    if result.stdout:
        print(result.stdout)
    return True


def clean_build_dirs():
    print("\n🧹 Removing build/, dist/ and egg-info directories...")
    for pattern in ("build", "dist", "*.egg-info"):
        for path in Path(".").glob(pattern):
            shutil.rmtree(path) if path.is_dir() else path.unlink()
            print(f"   Removed {path}")


def check_wheel():
    """The wheel must contain the package and every preset configuration."""
    wheels = sorted(Path("dist").glob("kirchhoff_nehari-*.whl"))
    if not wheels:
        print("❌ No wheel found in dist/")
        return False
    with zipfile.ZipFile(wheels[-1]) as archive:
        names = set(archive.namelist())
    missing = [p for p in PRESETS if f"kirchhoff_nehari/presets/{p}.yaml" not in names]
    if missing:
        print(f"❌ Presets missing from {wheels[-1].name}: {', '.join(missing)}")
        return False
    for path in sorted(Path("dist").iterdir()):
        print(f"   - {path.name} ({path.stat().st_size / 1024:.1f} KB)")
    print(f"✅ {wheels[-1].name} bundles {len(PRESETS)} presets")
    return True


def main():
    print("🚀 Building kirchhoff-nehari...")
    if not Path("pyproject.toml").exists():
        print("❌ pyproject.toml not found. Run this script from the project root.")
        sys.exit(1)

    clean_build_dirs()
    steps = [
        ("python -m pip install --upgrade build", "Installing build tools"),
        ("python -m pytest tests/ -m 'not slow' -q", "Running fast tests"),
        ("python -m build", "Building sdist and wheel"),
    ]
    for command, description in steps:
        if not run_command(command, description):
            sys.exit(1)

    if not check_wheel():
        sys.exit(1)

    print("\n🎉 Build completed")
    print("Try it: python -m pip install dist/kirchhoff_nehari-*.whl && "
          "kirchhoff-nehari validate preset:decoupled")


if __name__ == "__main__":
    main()

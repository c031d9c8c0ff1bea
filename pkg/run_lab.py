#!/usr/bin/env python3
"""Lab runner with error handling."""

import sys
from pathlib import Path

# Check that the virtual environment's Python is used
venv_python = Path(__file__).parent / "venv" / "bin" / "python"
if venv_python.exists() and sys.executable != str(venv_python) and sys.stdin.isatty():
    print("⚠️  Warning: running the system Python, not the virtual environment!")
    print(f"   Current:     {sys.executable}")
    print(f"   Recommended: {venv_python}")
    print("\n💡 Tip: activate the virtual environment first:")
    print("   source venv/bin/activate")
    print("   or")
    print("   ./activate.sh")
    print("\n" + "=" * 60)
    response = input("Continue anyway? (y/N): ")
    if response.lower() != 'y':
        sys.exit(1)
    print("=" * 60 + "\n")

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import cli_main


def main():
    """Run one lab subcommand."""

    print("=" * 60)
    print("🌊 alpha-NLS Wave Packet Lab")
    print("=" * 60)

    code = cli_main(sys.argv[1:])
    if code == 0:
        print("\n✅ Done!")
    else:
        print(f"\n❌ Failed with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())

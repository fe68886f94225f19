# main.py
import sys

from dotenv import load_dotenv

# Load GTPC_* runtime settings before gtpc.config reads them
load_dotenv()

from gtpc.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point for the constrained planning toolkit.
Run with: python app.py plan --map four_rooms_static --k 4 --out plan.json
"""
from dotenv import load_dotenv

# Load environment variables (COPRL_LOG_LEVEL, COPRL_RESULTS_DB_URL, etc.)
load_dotenv()

from app.cli import main  # noqa: E402

if __name__ == "__main__":
    raise SystemExit(main())

import sys

from pama_tts.main import main

if __name__ == "__main__":
    sys.exit(main())

import sys

from exec_harness import main

if __name__ == "__main__":
    sys.exit(main())

import sys

from voxcascade.cli import main

if __name__ == '__main__':
    sys.exit(main())

import sys

from harmonic3d.cli import main

sys.exit(main())

import sys

from fpsae.cli import main

sys.exit(main())

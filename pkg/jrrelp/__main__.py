import sys

from jrrelp.cli import main

sys.exit(main())

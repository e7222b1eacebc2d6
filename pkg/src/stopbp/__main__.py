import sys

from stopbp.cli import main

sys.exit(main())

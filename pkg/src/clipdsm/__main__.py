import sys

from clipdsm.cli import main

sys.exit(main())

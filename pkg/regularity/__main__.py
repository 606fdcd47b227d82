import sys

from regularity.cli import main

sys.exit(main())

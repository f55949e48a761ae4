import sys

from refaudit.cli import main

sys.exit(main())

import sys

from calrm.cli import main

sys.exit(main())

import sys

from gfmexplain.cli import main

sys.exit(main())

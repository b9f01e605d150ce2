import sys

from lrc_distill.cli.main import main

sys.exit(main())

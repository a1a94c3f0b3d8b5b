import sys

from appqual.cli import main

sys.exit(main())

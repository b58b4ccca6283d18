import sys

from mfhpo.cli import main

sys.exit(main())

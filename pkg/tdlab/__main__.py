import sys

from tdlab.main import main

sys.exit(main())

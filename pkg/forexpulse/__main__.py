import sys

from forexpulse.main import main

sys.exit(main())

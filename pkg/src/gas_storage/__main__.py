import sys

from gas_storage.cli import main

sys.exit(main())

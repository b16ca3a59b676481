from occmix.cli import main

raise SystemExit(main())

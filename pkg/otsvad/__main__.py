from otsvad.cli import main

raise SystemExit(main())

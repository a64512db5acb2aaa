import distributed_fdi.cli.main

distributed_fdi.cli.main.main()

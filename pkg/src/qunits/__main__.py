from qunits.cli import main

main()

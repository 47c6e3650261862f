from seqdp.cli import main

main()

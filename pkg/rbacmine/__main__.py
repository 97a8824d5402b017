from rbacmine.cli import main

main()

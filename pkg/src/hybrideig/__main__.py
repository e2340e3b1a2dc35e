from hybrideig.cli import main

main()

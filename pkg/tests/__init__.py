# slice-sim tests

import os
import unittest
from collections import Counter

tests_dir = os.path.abspath(os.path.dirname(__file__))

# the modules driving real job processes against the logical clock
TIMING_SENSITIVE = 'test_[gltc]*.py'

n_flakes = 0
flakes = Counter()
for i in range(50):
    suite = unittest.TestLoader().discover(tests_dir, pattern=TIMING_SENSITIVE,
                                           top_level_dir=os.path.join(tests_dir, '..'))
    result = unittest.TextTestRunner().run(suite)

    fails = result.failures + result.errors
    if fails:
        for test, _ in fails:
            flakes[test.id()] += 1
        n_flakes += 1

    print(f'flakiness: {n_flakes / (i + 1)}')
    print(f'problematic tests: {flakes}')

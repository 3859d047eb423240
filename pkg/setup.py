from setuptools import setup

setup(
    setup_requires=['pytest-runner'],
    tests_require=['pytest>=7.0'],
    test_suite='tests',
)

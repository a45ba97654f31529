from setuptools import setup, find_packages
from os import path

version = '0.1.0'

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='grid-testbed-tools',
    version=version,
    description='A desk-scale computational grid testbed: clusters, storage, '
                'replica catalog, information system and a client-side broker',
    long_description=long_description,
    long_description_content_type='text/markdown',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Developers',
        'Topic :: System :: Distributed Computing',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
    ],
    keywords='grid computing middleware broker batch scheduling',
    packages=find_packages(exclude=['tests', 'examples']),
    install_requires=[line for line in open('requirements.in').read().split('\n') if line],
    entry_points={
        'console_scripts': [
            'ng-cluster=grid_testbed.cli.daemons:cluster_main',
            'ng-se=grid_testbed.cli.daemons:se_main',
            'ng-rc=grid_testbed.cli.daemons:rc_main',
            'ng-giis=grid_testbed.cli.daemons:giis_main',
            'ng-demo=grid_testbed.cli.daemons:ng_demo',
            'ngsub=grid_testbed.cli.commands:ngsub',
            'ngstat=grid_testbed.cli.commands:ngstat',
            'ngget=grid_testbed.cli.commands:ngget',
            'ngcancel=grid_testbed.cli.commands:ngcancel',
            'ngclean=grid_testbed.cli.commands:ngclean',
            'ngls=grid_testbed.cli.commands:ngls',
        ],
    },
)

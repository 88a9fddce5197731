from setuptools import setup, find_packages
import codecs
import os

here = os.path.abspath(os.path.dirname(__file__))



VERSION = '0.1'
DESCRIPTION = "fwcomp compiles one platform-independent firewall policy (.fwb object database) into iptables, pf and ipfilter scripts with the same verdicts."

try:
    with codecs.open(os.path.join(here, "README.md"), encoding="utf-8") as fh:
        long_description = "\n" + fh.read()
except FileNotFoundError:
    long_description = DESCRIPTION

# Setting up
setup(
    name="fwcomp",
    version=VERSION,
    description=DESCRIPTION,
    long_description_content_type="text/markdown",
    long_description=long_description,
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.10",
    install_requires=['lxml', 'netaddr', 'rich', 'python-dotenv', 'colorama', "pydantic>=2.4.2"],
    extras_require={'dev': ['pytest>=7.0']},
    entry_points={'console_scripts': ['fwcomp=fwcomp.cli:main']},
    keywords=['firewall', 'iptables', 'pf', 'ipfilter', 'policy', 'compiler', 'network security'],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: System Administrators",
        "Programming Language :: Python :: 3",
        "Topic :: System :: Networking :: Firewalls",
        "Operating System :: Unix",
        "Operating System :: MacOS :: MacOS X",
    ]
)

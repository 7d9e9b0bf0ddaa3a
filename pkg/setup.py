import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="catmaxent",
    version="0.1.0",
    description="Maximum entropy models of categorical data from pattern frequency constraints",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research"
    ],
    packages=setuptools.find_packages(exclude=['tests', 'tests.*', 'benchmarks']),
    python_requires=">=3.9",
    entry_points={
        'console_scripts': [
            'catmaxent = catmaxent.cli:main'
        ]
    },
    extras_require={
        'tests': [
            'pytest'
        ],
        'docs': [
            'Sphinx',
            'sphinxcontrib-napoleon',
            'furo'
        ]
    },
    install_requires=[
        'h5py',  # hdf5 tuple datasets
        'tqdm',
        'numpy',
        'pandas >= 1.5',  # lineterminator in to_csv
        'scipy',
        'pyarrow',  # to read parquet, which is very handy for big datasets
        'setuptools'
    ]
)

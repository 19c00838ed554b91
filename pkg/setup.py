import os.path

from setuptools import setup, find_packages

with open(os.path.join(os.path.dirname(__file__), 'README.md')) as f:
    LONG_DESCRIPTION = f.read()
    DESCRIPTION = LONG_DESCRIPTION.splitlines()[0].lstrip('#').strip()

setup(
    name='epac',
    use_scm_version={'fallback_version': '0.0.0'},  # outside of git checkouts too

    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type='text/markdown',
    keywords=['video', 'compression', 'rate-distortion', 'range-coding', 'autodiff'],
    license='MIT',

    zip_safe=True,
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    entry_points={
        'console_scripts': [
            'epac = epac.cli:main',
        ],
    },

    python_requires='>=3.7',
    setup_requires=[
        'setuptools_scm',
    ],
    install_requires=[
        'typing_extensions',
        'click',
        'aiojobs>=1.0',
        'numpy>=1.20',  # sliding_window_view
        'scipy',
    ],
)

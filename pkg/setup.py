from setuptools import find_packages, setup


def parse_requirements(requirements):
    # load from requirements.txt
    with open(requirements) as f:
        lines = [l for l in f]
        # remove spaces
        stripped = list(map((lambda x: x.strip()), lines))
        # remove comments
        nocomments = list(filter((lambda x: not x.startswith('#')), stripped))
        # remove empty lines
        reqs = list(filter((lambda x: x), nocomments))
        return reqs


PACKAGE_NAME = "VoxCascade"
PACKAGE_VERSION = "0.1.0"
SUMMARY = 'VoxCascade: multi-scale patch-based GAN generation of 3D volumes'
DESCRIPTION = """
Memory-constant generation and domain translation of large 3D volumes in Python

A low-resolution GAN generates the whole volume from an edge sketch, then one
patch GAN per scale doubles its resolution, patch by patch, conditioned on the
sketch and on the scale below. Training memory depends only on the
low-resolution and patch sizes, never on the size of the final volume.

Ships with a numpy autograd engine, 3D Canny sketches, image quality metrics,
a procedural phantom generator and an analytic training-memory model.
"""
REQUIREMENTS = parse_requirements("requirements.txt")

setup(
    name=PACKAGE_NAME,
    version=PACKAGE_VERSION,
    description=SUMMARY,
    long_description=DESCRIPTION,
    license='MIT License',
    include_package_data=True,
    packages=find_packages(exclude=['tests']),
    platforms=['Unix'],
    install_requires=REQUIREMENTS,
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['voxcascade=voxcascade.cli:main']},
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering :: Image Processing',
    ],
    keywords="python, gan, 3d, volume, multi-scale, patch, numpy",
)

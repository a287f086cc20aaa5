from setuptools import setup, find_packages

setup(name='churngrid',
      version='0.0.1',
      description='Churn prediction for prepaid telecom customers from call and top-up activity images.',
      license='MIT',
      packages=find_packages(),
      python_requires='>=3.10',
      install_requires=[
        'numpy',
        'pandas',
        'scipy>=1.8',
        'Pillow',
        'pytest',
        'scikit-learn',
      ],
      entry_points={
        'console_scripts': [
          'churngrid=churngrid.cli:main',
        ],
      },
      zip_safe=False)

# -*- coding: utf-8 -*-
#
# Grid-Volt documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

import gridvolt  # noqa: E402

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode', 'sphinx.ext.intersphinx']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'Grid-Volt'
copyright = u'2024-2026, Grid-Volt developers'

# The short X.Y version.
version = gridvolt.__version__
# The full version, including alpha/beta/rc tags.
release = gridvolt.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'Grid-Voltdoc'

# -- Options for LaTeX and manual page output ----------------------------------

latex_documents = [
  ('index', 'Grid-Volt.tex', u'Grid-Volt Documentation', u'Grid-Volt developers', 'manual'),
]

man_pages = [
    ('index', 'gridvolt', u'Grid-Volt Documentation', [u'Grid-Volt developers'], 1)
]

intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable', None),
                       'pandas': ('https://pandas.pydata.org/docs', None)}

autodoc_member_order = 'bysource'

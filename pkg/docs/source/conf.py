import os
import sys
from io import StringIO

from docutils import nodes, statemachine
from docutils.parsers.rst import Directive

sys.path.insert(0, os.path.abspath("../.."))

import otalign

project = "otalign"
copyright = "2022, the otalign developers"
author = "The otalign developers"

release = "v" + otalign.__version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosectionlabel",
    "sphinxarg.ext",
]

autosectionlabel_prefix_document = True

html_theme = "sphinx_rtd_theme"


class ExecDirective(Directive):
    """
    Runs the python code of the block and parses what it prints as
    reStructuredText. Used for the tables of otalign.documentation.
    """

    has_content = True

    def run(self):
        source = self.state_machine.input_lines.source(
            self.lineno - self.state_machine.input_offset - 1
        )

        stdout, sys.stdout = sys.stdout, StringIO()
        try:
            exec("\n".join(self.content), {})
            text = sys.stdout.getvalue()
        except Exception as e:
            return [
                nodes.error(
                    None,
                    nodes.paragraph(
                        text=f"Could not run the block at {os.path.basename(source)}:{self.lineno}"
                    ),
                    nodes.paragraph(text=str(e)),
                )
            ]
        finally:
            sys.stdout = stdout

        tab_width = self.state.document.settings.tab_width
        lines = statemachine.string2lines(text, tab_width, convert_whitespace=True)
        self.state_machine.insert_input(lines, source)
        return []


def setup(app):
    app.add_directive("exec", ExecDirective)

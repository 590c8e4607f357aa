"""Generate one API reference page per fcmli_control module.

Run by mkdocs-gen-files at build time. The submodules (`plant`, `mpc`, `ann`,
...) define no ``__all__``, so the package tree is walked with pkgutil instead
and each public module gets a page rendering its public members. The package
page itself documents the names re-exported in ``fcmli_control.__all__``.
SUMMARY.md is written for mkdocs-literate-nav.
"""

import importlib
import pkgutil
from pathlib import Path

import mkdocs_gen_files

PACKAGE = "fcmli_control"
API_DIR = Path("api")
SKIP = {"__main__"}

nav = mkdocs_gen_files.Nav()


def write_page(dotted: str, *, members: list[str] | None = None) -> None:
    """Write the page of one module and register it in the navigation"""
    module = importlib.import_module(dotted)
    parts = dotted.split(".")
    is_package = hasattr(module, "__path__")
    if is_package:
        doc_path = API_DIR / Path(*parts) / "index.md"
    else:
        doc_path = API_DIR / Path(*parts[:-1]) / f"{parts[-1]}.md"
    nav[("API Reference", *parts[1:])] = str(doc_path)

    with mkdocs_gen_files.open(doc_path, "w") as fd:
        fd.write(f"# `{parts[-1]}`\n\n")
        fd.write(f"```python\nimport {dotted}\n```\n\n")
        fd.write(f"::: {dotted}\n")
        fd.write("    options:\n")
        if members is not None:
            fd.write(f"      members: {members}\n")
        else:
            fd.write("      filters: ['!^_']\n")
    mkdocs_gen_files.set_edit_path(doc_path, module.__file__)


root = importlib.import_module(PACKAGE)
# modules get their own pages; the root page lists the re-exported classes
# and functions only
write_page(
    PACKAGE,
    members=[n for n in root.__all__ if not hasattr(getattr(root, n), "__file__")],
)
for info in pkgutil.walk_packages(root.__path__, prefix=f"{PACKAGE}."):
    leaf = info.name.rsplit(".", 1)[-1]
    if leaf in SKIP or leaf.startswith("_"):
        continue
    write_page(info.name)

with mkdocs_gen_files.open("SUMMARY.md", "a") as nav_file:
    nav_file.writelines(nav.build_literate_nav())

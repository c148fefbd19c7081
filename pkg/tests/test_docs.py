from __future__ import annotations

import pytest
from pytest_examples import CodeExample, EvalExample, find_examples

# Only pages whose ``python`` fences run end to end; configuration.md holds
# config-file snippets, not code.
DOC_PAGES = ("README.md", "docs/index.md")


@pytest.mark.parametrize("example", list(find_examples(*DOC_PAGES)), ids=str)
def test_docs_examples(example: CodeExample, eval_example: EvalExample) -> None:
    if eval_example.update_examples:
        eval_example.run_print_update(example)
    else:
        eval_example.run_print_check(example)

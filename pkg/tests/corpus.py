"""Curated coder/tester messages with their expected parses.

Shared between the unit tests and the acceptance suite. EXTRACTION_CASES
map message -> expected extract_code result (None means NoCodeFound);
VERDICT_CASES map message -> (verdict, marker_found).
"""
from __future__ import annotations

CODE_SIMPLE = "def f():\n    return 1"
CODE_LONG = (
    "def solve(items):\n"
    "    out = []\n"
    "    seen = set()\n"
    "    for item in items:\n"
    "        if item in seen:\n"
    "            continue\n"
    "        seen.add(item)\n"
    "        out.append(item)\n"
    "    return out"
)

EXTRACTION_CASES: list[tuple[str, str | None]] = [
    # plain fence, prose around it
    ("Here you go:\n```\ndef f():\n    return 1\n```", CODE_SIMPLE),
    # language tag
    ("```python\ndef f():\n    return 1\n```", CODE_SIMPLE),
    ("```py\ndef f():\n    return 1\n```\nHope that helps!", CODE_SIMPLE),
    # tilde fence
    ("~~~\ndef f():\n    return 1\n~~~", CODE_SIMPLE),
    # longest block wins over a short snippet
    (f"A fix:\n```python\nx = 1\n```\nFull solution:\n```python\n{CODE_LONG}\n```", CODE_LONG),
    # longest block wins regardless of order
    (f"```python\n{CODE_LONG}\n```\nOr in short:\n```python\nx = 1\n```", CODE_LONG),
    # tie between equal blocks -> last occurrence
    ("```\ndef f():\n    return 1\n```\nsecond:\n```\ndef g():\n    return 2\n```",
     "def g():\n    return 2"),
    # trailing whitespace normalized
    ("```\ndef f():\n    return 1\n\n\n```", CODE_SIMPLE),
    # fence indented inside a bullet
    ("- the fix:\n  ```python\n  x = 1\n  ```", "  x = 1"),
    # unterminated fence (truncated reply)
    ("```python\ndef f():\n    return 1", CODE_SIMPLE),
    # fenceless but plausibly code
    ("def f():\n    return 1\n", CODE_SIMPLE),
    ("import math\nprint(math.pi)", "import math\nprint(math.pi)"),
    # multi-line message with interior code-looking prose stays one block
    ("```python\nclass A:\n    pass\n\n\nclass B(A):\n    pass\n```",
     "class A:\n    pass\n\n\nclass B(A):\n    pass"),
    # crlf input: extraction is verbatim, so interior \r survives
    ("```python\r\ndef f():\r\n    return 1\r\n```", "def f():\r\n    return 1"),
    # prose only -> no code
    ("Sorry, I cannot write that program.", None),
    ("looks fine to me.", None),
    ("", None),
    # a bare word parses as a Name expression but is not code
    ("hello", None),
    # empty fenced block falls through to no-code
    ("```\n```", None),
    ("```python\n\n```", None),
]

VERDICT_CASES: list[tuple[str, str, bool]] = [
    ("Everything checks out, all tests satisfied.\nVERDICT: PASS", "pass", True),
    ("edge case breaks.\nverdict: fail", "fail", True),
    ("Verdict: Pass", "pass", True),
    ("  VERDICT:   FAIL", "fail", True),
    ("VERDICT: PASS\nbut wait, actually\nVERDICT: FAIL", "fail", True),  # last marker wins
    ("VERDICT: FAIL\nafter the fix:\nVERDICT: PASS", "pass", True),
    ("The code is correct.\nVERDICT:PASS", "pass", True),
    ("looks fine to me.", "fail", False),  # approval requires the marker
    ("I would say this passes.", "fail", False),
    ("VERDICT: MAYBE", "fail", False),
    ("the word verdict appears mid-sentence: pass the salt", "fail", False),
    ("", "fail", False),
    ("VERDICT: PASS with reservations", "pass", True),
    ("summary:\n  verdict: pass\n", "pass", True),
]

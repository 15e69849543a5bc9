"""Reference tokenizer written from the rule list alone.

Rules: strip the text; drop one pair of enclosing double quotes when no
other double quote is inside; split on whitespace; detach each of
. , ; : ! ? ( ) [ ] " ' as its own token; keep everything else (hyphens
included) inside the word.
"""
import json
import sys

DETACH = set('.,;:!?()[]"\'')


def tokenize(text):
    s = text.strip()
    if len(s) >= 2 and s[0] == '"' and s[-1] == '"' and '"' not in s[1:-1]:
        s = s[1:-1]
    out = []
    for word in s.split():
        cur = ""
        for ch in word:
            if ch in DETACH:
                if cur:
                    out.append(cur)
                    cur = ""
                out.append(ch)
            else:
                cur += ch
        if cur:
            out.append(cur)
    return out


CASES = [
    "Frederick County, Maryland",
    "",
    '"1907-07-11"',
    "translate graph to English: ",
    "Historic districts in the United States",
    "The 14th New Jersey Volunteer Infantry Monument is located on the Monocacy National Battlefield, Frederick County, Maryland.",
    "Alan Bean (born 1932) isn't [retired]!",
    '"United States"',
    '"a "b" c"',
    "  spaced\tout\nwords  ",
    "x-ray;gamma?delta",
]

if __name__ == "__main__":
    for case in CASES:
        print(json.dumps(case), "->", json.dumps(tokenize(case)))
        again = tokenize(" ".join(tokenize(case)))
        if again != tokenize(case):
            print("  not idempotent:", again, file=sys.stderr)

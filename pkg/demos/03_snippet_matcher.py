"""Score code against knowledge-base snippets with TF-IDF and cosine similarity."""
from libscan import SnippetMatcher, load_kb, tokenize

kb = load_kb()
print(tokenize("using SafeMath for int256;"))

matcher = SnippetMatcher(kb, threshold=0.30)

candidates = {
    "misbound library": "contract T { using SafeMath for int256; }",
    "unrelated code": """contract Registry {
        mapping(bytes32 => address) owners;
        function claim(bytes32 name) external {
            require(owners[name] == address(0), "taken");
            owners[name] = msg.sender;
        }
    }""",
}
for title, code in candidates.items():
    result = matcher.match(code)
    top = sorted(result.per_pattern_scores.items(), key=lambda kv: -kv[1])[:3]
    print(f"{title}: label={result.label} score={result.score:.3f}")
    for label, score in top:
        print(f"    {label}: {score:.3f}")

# Very short functions share a large fraction of their few tokens with some
# snippet, so a low threshold starts flagging them.
loose = SnippetMatcher(kb, threshold=0.05)
print("loose label for unrelated code:", loose.match(candidates["unrelated code"]).label)

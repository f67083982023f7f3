"""
Versioned parameter store with compare-and-set
==============================================

Model state is shared as opaque blobs under monotonically increasing
versions. Writers can insist on the version they read; losers of that
race adopt the stored winner instead of clobbering it.
"""

from pilotedge.errors import VersionConflict
from pilotedge.params import ParamStore

store = ParamStore()

# plain puts bump the version unconditionally
v1 = store.put_model("detector", b"weights-after-batch-1")
v2 = store.put_model("detector", b"weights-after-batch-2")
print(f"unconditional puts produced versions {v1} then {v2}")

# a conditional put only lands if nobody moved the version underneath us
v3 = store.put_model("detector", b"weights-merged", expected_version=v2)
print(f"compare-and-set on version {v2} -> version {v3}")

# a stale writer loses cleanly and learns the current version
try:
    store.put_model("detector", b"stale", expected_version=v2)
except VersionConflict as exc:
    print(f"stale write rejected, store is at version {exc.current_version}")

# readers can long-poll for "version X or newer" instead of busy-waiting
blob, version = store.get_model("detector", min_version=v3, timeout=1.0)
print(f"read version {version}: {blob!r}")

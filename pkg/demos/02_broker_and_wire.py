"""
Append-only broker over a length-prefixed binary protocol
=========================================================

Records land in per-partition logs addressed by offset. The same frames
work in-process or across TCP; here we run a real server on loopback and
peek at the raw bytes of one frame.
"""

from pilotedge import wire
from pilotedge.broker import Record
from pilotedge.client import connect_broker
from pilotedge.server import BrokerServer

server = BrokerServer().start()
print(f"server listening on {server.endpoint}")

client = connect_broker(server.endpoint)
client.create_topic("readings", partitions=2)

# offsets are assigned per partition, starting at zero
job = b"\x42" * 16
for i in range(3):
    offset = client.produce("readings", 0, Record(job_id=job, message_id=i, partition=0, payload=bytes([i]) * 4))
    print(f"produced message {i} at offset {offset.value}")

# fetch returns copies; the broker has stamped its ingest time on each
for record in client.fetch("readings", 0, 0, 10):
    stages = [tag for tag, _ in record.timestamps]
    print(f"fetched message {record.message_id}, stage tags {stages}")

# consumers record progress with commits; stale commits are ignored
client.commit("dashboard", "readings", 0, 3)
client.commit("dashboard", "readings", 0, 1)  # no-op, progress never rewinds

# partition assignment is deterministic: sorted members, round robin
assignment = client.assign("dashboard", "readings", ["web-2", "web-1"])
print(f"assignment {assignment}")

# the wire format is little-endian throughout: len | op | body
frame = wire.encode_message(wire.CommitReq("dashboard", "readings", 0, 3))
print(f"commit frame ({len(frame)} bytes): {frame.hex()}")

client.close()
server.stop()

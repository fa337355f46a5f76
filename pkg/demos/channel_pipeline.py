"""A producer hands objects to a consumer thread over a checked channel.

Run with ``python3 demos/channel_pipeline.py``.  Ownership of each message
moves with it, so the consumer may write it and the producer may not.
"""

from __future__ import annotations

import argparse

from somcheck.checker import Session
from somcheck.sync import Channel, spawn_thread


class Msg:
    def __init__(self, value):
        self.value = value


def consume(actor, ch, n, out):
    for _ in range(n):
        msg = ch.receive(actor)
        assert actor.write(msg.som_id)
        msg.value *= 10
        out.append(msg.value)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=5, help="messages to send")
    ap.add_argument("--mode", default="full", choices=["full", "partial", "none"])
    ap.add_argument("--bug", action="store_true", help="touch each message after sending it")
    args = ap.parse_args(argv)

    s = Session(args.mode)
    me = s.actor(s.root)
    ch = Channel(s, me)
    out = []
    t = spawn_thread(s, me, consume, ch, args.n, out, name="consumer")
    for i in range(args.n):
        m = Msg(i)
        me.allocate(m)
        assert me.write(m.som_id)
        ch.send(me, m)
        if args.bug:
            # the message now belongs to the channel or the consumer
            try:
                assert me.read(m.som_id)
            except AssertionError:
                pass
    t.join(10)
    print("consumer saw:", out)
    print(s.report().strip() or "no violations")
    return 1 if s.violations else 0


if __name__ == "__main__":
    raise SystemExit(main())

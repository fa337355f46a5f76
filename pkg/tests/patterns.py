"""Hand-instrumented programs for the ownership patterns the checker targets.

Every field read or write goes through the acting process's hooks, the way
an instrumented program would issue them.  Each function returns the session.
"""

from __future__ import annotations

from somcheck.checker import Session


class LLNode:
    def __init__(self, value):
        self.value = value
        self.next = None


class LinkedList:
    def __init__(self, actor):
        self.actor = actor
        actor.allocate(self)
        self.first = None
        self.last = None

    def add(self, value) -> LLNode:
        a = self.actor
        n = LLNode(value)
        a.allocate(n)
        assert a.write(n.som_id)
        prev = self.last
        # the list stores the node first, so the list becomes its owner
        assert a.assign(self.som_id, n.som_id)
        self.last = n
        if prev is None:
            assert a.assign(self.som_id, n.som_id)
            self.first = n
        else:
            assert a.assign(prev.som_id, n.som_id)
            prev.next = n
        return n

    def split_before(self, index: int, move_nodes: bool = True) -> LinkedList:
        """Move the first ``index`` nodes into a new list.

        ``move_nodes=False`` leaves out the passes, which is the mistake the
        checker should catch once the new list changes hands."""
        a = self.actor
        result = LinkedList(a)
        assert a.read(self.som_id)
        assert a.assign(result.som_id, self.first.som_id)
        result.first = self.first
        # ownership of the moved nodes follows them to the new list
        if move_nodes:
            assert a.pass_to(result.first.som_id, result.som_id)
        cur = self.first
        for _ in range(1, index):
            assert a.read(cur.som_id)
            cur = cur.next
            if move_nodes:
                assert a.pass_to(cur.som_id, result.som_id)
        assert a.read(cur.som_id)
        assert a.write(self.som_id)
        self.first = cur.next
        assert a.write(cur.som_id)
        cur.next = None
        assert a.write(result.som_id)
        result.last = cur
        return result

    def values(self) -> list:
        a = self.actor
        out = []
        assert a.read(self.som_id)
        cur = self.first
        while cur is not None:
            assert a.read(cur.som_id)
            out.append(cur.value)
            cur = cur.next
        return out

    def bump(self) -> None:
        a = self.actor
        assert a.read(self.som_id)
        cur = self.first
        while cur is not None:
            assert a.write(cur.som_id)
            cur.value += 1
            cur = cur.next


def linked_list_split(mode: str = "full", size: int = 10, index: int = 4):
    """Build a list, split it, touch both halves; returns (session, head, tail)."""
    s = Session(mode)
    me = s.actor(s.root)
    lst = LinkedList(me)
    for v in range(size):
        lst.add(v)
    head = lst.split_before(index)
    head.bump()
    lst.bump()
    return s, head, lst

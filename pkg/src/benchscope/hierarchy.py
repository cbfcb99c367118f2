"""Framework class-hierarchy index.

Canonicalizing API references needs to know, for every platform class,
its superclass, interfaces and declared members: a reference to
AppCompatActivity.onCreate and an override of Activity.onCreate both
denote the android/app/Activity.onCreate surface.  The index is a plain
text file so it can be versioned per API level and regenerated from any
platform stub jar:

    # comment
    C <class-path> <super-path|-> [I <iface-path> ...]
    M <name> <descriptor>
    F <name> <type>

M and F lines attach to the most recent C line.  Classes named as a
superclass or interface but never declared are tracked as external;
lookups never cross them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .dex import MemberRef


class FrameworkIndexError(Exception):
    """Base error for unusable index files."""


class ParseError(FrameworkIndexError):
    def __init__(self, line_no, message):
        super().__init__("line %d: %s" % (line_no, message))
        self.line_no = line_no


class HierarchyCycle(FrameworkIndexError):
    def __init__(self, classes):
        super().__init__("inheritance cycle through: %s" % ", ".join(classes))
        self.classes = tuple(classes)


@dataclass
class FrameworkClass:
    superclass: str | None
    interfaces: tuple
    methods: set = field(default_factory=set)  # (name, descriptor)
    fields: set = field(default_factory=set)   # (name, type descriptor)


@dataclass
class FrameworkIndex:
    classes: dict
    external: set  # named as super/interface but never declared

    def declares(self, class_path, name, descriptor, kind):
        cls = self.classes.get(class_path)
        if cls is None:
            return False
        bucket = cls.methods if kind == "method" else cls.fields
        return (name, descriptor) in bucket


def load_index(source) -> FrameworkIndex:
    """Load an index from a path or an iterable of lines.

    Raises ParseError with the offending line number on grammar errors and
    HierarchyCycle if the declared super/interface graph has a cycle.
    """
    if isinstance(source, (str, bytes)):
        with open(source, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    else:
        lines = list(source)

    classes = {}
    current = None
    for line_no, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        tag = tokens[0]
        if tag == "C":
            if len(tokens) < 3:
                raise ParseError(line_no, "C line needs class and superclass: %r" % line)
            name, super_token = tokens[1], tokens[2]
            interfaces = tuple(t for t in tokens[3:] if t != "I")
            if name in classes:
                raise ParseError(line_no, "class %s declared twice" % name)
            current = FrameworkClass(None if super_token == "-" else super_token, interfaces)
            classes[name] = current
        elif tag == "M":
            if current is None:
                raise ParseError(line_no, "M line before any C line")
            if len(tokens) != 3:
                raise ParseError(line_no, "M line needs name and descriptor: %r" % line)
            current.methods.add((tokens[1], tokens[2]))
        elif tag == "F":
            if current is None:
                raise ParseError(line_no, "F line before any C line")
            if len(tokens) != 3:
                raise ParseError(line_no, "F line needs name and type: %r" % line)
            current.fields.add((tokens[1], tokens[2]))
        else:
            raise ParseError(line_no, "unknown record tag %r" % tag)

    external = set()
    for cls in classes.values():
        for parent in _parents(cls):
            if parent not in classes:
                external.add(parent)

    _check_acyclic(classes)
    return FrameworkIndex(classes, external)


def _parents(cls):
    if cls.superclass is not None:
        yield cls.superclass
    yield from cls.interfaces


def _check_acyclic(classes):
    WHITE, GRAY, BLACK = 0, 1, 2
    color = dict.fromkeys(classes, WHITE)
    for start in classes:
        if color[start] != WHITE:
            continue
        stack = [(start, iter([p for p in _parents(classes[start]) if p in classes]))]
        color[start] = GRAY
        while stack:
            node, parents = stack[-1]
            advanced = False
            for parent in parents:
                if color[parent] == GRAY:
                    cycle = [parent]
                    for name, _ in reversed(stack):
                        cycle.append(name)
                        if name == parent:
                            break
                    raise HierarchyCycle(sorted(set(cycle)))
                if color[parent] == WHITE:
                    color[parent] = GRAY
                    stack.append((parent, iter([p for p in _parents(classes[parent])
                                                if p in classes])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()


def _ancestors(lookup, start):
    """Ancestors of start in canonical search order, start excluded.

    Superclass chain bottom-up first, then the interface graph
    breadth-first, seeded per chain class in declaration order.  The order
    is total, so every tie (diamonds included) resolves the same way on
    every run.
    """
    chain = []
    seen = {start}
    cur = lookup(start)
    while cur is not None and cur.superclass is not None and cur.superclass not in seen:
        chain.append(cur.superclass)
        seen.add(cur.superclass)
        cur = lookup(cur.superclass)
    yield from chain

    queue = deque()
    for cls_name in [start] + chain:
        cls = lookup(cls_name)
        if cls is not None:
            queue.extend(i for i in cls.interfaces if i not in seen)
            seen.update(cls.interfaces)
    while queue:
        iface = queue.popleft()
        yield iface
        cls = lookup(iface)
        if cls is None:
            continue
        for parent in _parents(cls):
            if parent not in seen:
                seen.add(parent)
                queue.append(parent)


def canonical_declaring_class(index: FrameworkIndex, ref: MemberRef) -> MemberRef:
    """Re-own ref to the topmost framework ancestor declaring the member.

    Identity on refs whose owner is not in the index.  Idempotent: once at
    the top, no ancestor above declares the member.  Ties between
    superclass chain and interfaces go to the chain, then to declaration
    order.
    """
    if ref.owner_class not in index.classes:
        return ref
    owner = ref.owner_class
    while True:
        higher = None
        for ancestor in _ancestors(index.classes.get, owner):
            if index.declares(ancestor, ref.name, ref.descriptor, ref.kind):
                higher = ancestor
                break
        if higher is None:
            break
        owner = higher
    if owner == ref.owner_class:
        return ref
    return ref._replace(owner_class=owner)


def framework_callbacks(index: FrameworkIndex, app_classes) -> set:
    """Framework members the app implements rather than calls.

    For every method an app class defines (constructors and class
    initializers excluded: they are definitions, not overrides), if any
    framework ancestor declares a method with the same name and
    descriptor, the canonicalized framework ref is part of the app's API
    surface even though no call site references it.  Ancestor walks cross
    intermediate app classes, so indirect subclasses are covered.
    """
    def lookup(name):
        cls = app_classes.get(name)
        if cls is not None:
            return cls
        return index.classes.get(name)

    callbacks = set()
    for class_name, cls in app_classes.items():
        framework_ancestors = None
        for member in cls.members:
            if member.kind != "method" or member.owner_class != class_name:
                continue
            if member.name in ("<init>", "<clinit>"):
                continue
            if framework_ancestors is None:
                framework_ancestors = [a for a in _ancestors(lookup, class_name)
                                       if a in index.classes]
            for ancestor in framework_ancestors:
                if index.declares(ancestor, member.name, member.descriptor, "method"):
                    callbacks.add(canonical_declaring_class(
                        index, MemberRef(ancestor, member.name, member.descriptor, "method")))
                    break
    return callbacks


def serialize_index(index: FrameworkIndex) -> str:
    """Stable text form: classes and members sorted.

    Interface order is kept as declared; it is the canonicalization
    tie-break, so sorting it would change lookup semantics.
    """
    lines = []
    for name in sorted(index.classes):
        cls = index.classes[name]
        tokens = ["C", name, cls.superclass if cls.superclass is not None else "-"]
        if cls.interfaces:
            tokens.append("I")
            tokens.extend(cls.interfaces)
        lines.append(" ".join(tokens))
        for mname, mdesc in sorted(cls.methods):
            lines.append("M %s %s" % (mname, mdesc))
        for fname, fdesc in sorted(cls.fields):
            lines.append("F %s %s" % (fname, fdesc))
    return "\n".join(lines) + "\n"

"""
Directory entries of the information system and their DN scheme:

    nordugrid-cluster-name=<host>,ou=<country>,o=grid
    nordugrid-pbsqueue-name=<q>,<cluster dn>
    nordugrid-info-group-name=jobs|users,<queue dn>
    nordugrid-pbsjob-globalid=<id>,<jobs group dn>
    nordugrid-authuser-sn=<subject hash>,<users group dn>
    nordugrid-se-name=<host>,ou=<country>,o=grid
    nordugrid-rc-name=<host>,ou=<country>,o=grid
"""
import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List

OBJECTCLASSES = (
    'nordugrid-cluster', 'nordugrid-se', 'nordugrid-rc', 'nordugrid-pbsqueue',
    'nordugrid-authuser', 'nordugrid-pbsjob', 'nordugrid-info-group')

ROOT_DN = 'o=grid'


def _check_rdn_value(value):
    if not value or any(c in value for c in ',=\n'):
        raise ValueError('invalid DN component value %r' % value)
    return value


def country_dn(country):
    return 'ou=%s,%s' % (_check_rdn_value(country), ROOT_DN)


def cluster_dn(host, country):
    return 'nordugrid-cluster-name=%s,%s' % (_check_rdn_value(host), country_dn(country))


def se_dn(host, country):
    return 'nordugrid-se-name=%s,%s' % (_check_rdn_value(host), country_dn(country))


def rc_dn(host, country):
    return 'nordugrid-rc-name=%s,%s' % (_check_rdn_value(host), country_dn(country))


def queue_dn(cluster, queue):
    return 'nordugrid-pbsqueue-name=%s,%s' % (_check_rdn_value(queue), cluster)


def group_dn(queue, group):
    assert group in ('jobs', 'users')
    return 'nordugrid-info-group-name=%s,%s' % (group, queue)


def job_dn(jobs_group, gridid):
    return 'nordugrid-pbsjob-globalid=%s,%s' % (_check_rdn_value(gridid), jobs_group)


def subject_hash(subject):
    return hashlib.sha1(subject.encode('utf-8')).hexdigest()[:16]


def user_dn(users_group, subject):
    return 'nordugrid-authuser-sn=%s,%s' % (subject_hash(subject), users_group)


def parent_dn(dn):
    return dn.split(',', 1)[1] if ',' in dn else ''


def is_descendant(dn, ancestor):
    return dn.endswith(',' + ancestor)


@dataclass
class Entry:
    dn: str
    attrs: Dict[str, List[str]] = field(default_factory=OrderedDict)

    @classmethod
    def create(cls, dn, objectclass, **attrs):
        """attribute keyword names use '_' for '-', values may be scalars or lists"""
        if objectclass not in OBJECTCLASSES:
            raise ValueError('unknown objectclass %r' % objectclass)
        entry = cls(dn, OrderedDict())
        entry.add('objectclass', objectclass)
        for name, values in attrs.items():
            entry.add(name.replace('_', '-'), values)
        return entry

    @property
    def objectclass(self):
        return self.first('objectclass')

    def add(self, name, values):
        if values is None:
            return self
        if not isinstance(values, (list, tuple, set, frozenset)):
            values = [values]
        elif isinstance(values, (set, frozenset)):
            values = sorted(values)
        name = name.lower()
        for value in values:
            value = str(value)
            if '\n' in value or '\r' in value:
                raise ValueError('attribute values cannot contain line breaks: %r' % value)
            self.attrs.setdefault(name, []).append(value)
        return self

    def get(self, name):
        return self.attrs.get(name.lower(), [])

    def first(self, name, default=None):
        values = self.get(name)
        return values[0] if values else default

    def number(self, name, default=0):
        try:
            return int(self.first(name))
        except (TypeError, ValueError):
            return default


def serialize_entries(entries):
    """
    Blocks of "dn: <dn>" followed by "attr: value" lines (attributes sorted,
    values in insertion order), blocks separated by a blank line.
    """
    blocks = []
    for entry in entries:
        lines = ['dn: %s' % entry.dn]
        for name in sorted(entry.attrs):
            lines.extend('%s: %s' % (name, value) for value in entry.attrs[name])
        blocks.append('\n'.join(lines) + '\n')
    return '\n'.join(blocks)


def parse_entries(text):
    entries = []
    for block in text.split('\n\n'):
        lines = [line for line in block.split('\n') if line]
        if not lines:
            continue
        name, _, dn = lines[0].partition(': ')
        if name != 'dn':
            raise ValueError('entry block does not start with a dn: %r' % lines[0])
        entry = Entry(dn, OrderedDict())
        for line in lines[1:]:
            name, sep, value = line.partition(': ')
            if not sep:
                raise ValueError('malformed attribute line %r' % line)
            entry.attrs.setdefault(name.lower(), []).append(value)
        entries.append(entry)
    return entries

import re
from dataclasses import dataclass, field
from typing import FrozenSet, List, Tuple

from grid_testbed.xrsl.parser import XrslError, XrslDocument, Relation, parse, quote


class XrslValidationError(XrslError):
    pass


ACTIONS = ('submit', 'cancel', 'clean')

INTEGER_ATTRIBUTES = ('cputime', 'memory', 'disk', 'lifetime')
STRING_ATTRIBUTES = ('executable', 'queue', 'stdout', 'stderr', 'jobname', 'notify', 'action')
LIST_ATTRIBUTES = ('arguments', 'runtimeenvironment')
FILE_ATTRIBUTES = ('inputfiles', 'outputfiles')
STAGING_ATTRIBUTES = FILE_ATTRIBUTES

KNOWN_ATTRIBUTES = frozenset(INTEGER_ATTRIBUTES + STRING_ATTRIBUTES + LIST_ATTRIBUTES + FILE_ATTRIBUTES)

_INTEGER = re.compile(r'[0-9]+\Z')


@dataclass
class JobDescription:
    executable: str = ''
    arguments: List[str] = field(default_factory=list)
    # (name, source URL), empty source: uploaded by the user
    inputfiles: List[Tuple[str, str]] = field(default_factory=list)
    # (name, destination URL), empty destination: kept for download
    outputfiles: List[Tuple[str, str]] = field(default_factory=list)
    cputime: int = 0
    memory: int = 0
    disk: int = 0
    runtimeenvironment: FrozenSet[str] = frozenset()
    queue: str = ''
    stdout: str = ''
    stderr: str = ''
    jobname: str = ''
    notify: str = ''
    lifetime: int = 0
    action: str = 'submit'

    def validate(self):
        if self.action not in ACTIONS:
            raise XrslValidationError('action: must be one of %s' % ', '.join(ACTIONS))
        if self.action == 'submit' and not self.executable:
            raise XrslValidationError('executable: required for submission')
        if self.action != 'submit' and (self.inputfiles or self.outputfiles):
            raise XrslValidationError('%s request cannot carry staging attributes' % self.action)
        for attr in FILE_ATTRIBUTES:
            names = [name for name, _ in getattr(self, attr)]
            if len(names) != len(set(names)):
                raise XrslValidationError('%s: duplicate file name' % attr)
            if any(not name for name in names):
                raise XrslValidationError('%s: empty file name' % attr)
        for attr in INTEGER_ATTRIBUTES:
            value = getattr(self, attr)
            if not isinstance(value, int) or value < 0:
                raise XrslValidationError('%s: not a non-negative integer' % attr)
        return self

    @property
    def uploads(self):
        """names of inputs the user uploads into the session directory"""
        return [name for name, source in self.inputfiles if not source]

    @property
    def retained_outputs(self):
        """names of outputs kept in the session directory for download"""
        return [name for name, destination in self.outputfiles if not destination]


def to_job(doc: XrslDocument) -> JobDescription:
    """
    Maps a parsed document onto a JobDescription, strictly: unknown attributes,
    repeated single-valued attributes and malformed values are rejected.
    """
    job = JobDescription()
    seen = set()
    for relation in doc.relations:
        attr = relation.attribute
        if attr not in KNOWN_ATTRIBUTES:
            raise XrslValidationError('%s: unknown attribute' % attr)

        if attr in INTEGER_ATTRIBUTES or attr in STRING_ATTRIBUTES:
            if attr in seen:
                raise XrslValidationError('%s: duplicate attribute' % attr)
            value = _single_scalar(relation)
            if attr in INTEGER_ATTRIBUTES:
                if not _INTEGER.match(value):
                    raise XrslValidationError('%s: not an integer' % attr)
                value = int(value)
            setattr(job, attr, value)

        elif attr == 'arguments':
            job.arguments = job.arguments + _flat_scalars(relation)

        elif attr == 'runtimeenvironment':
            job.runtimeenvironment = job.runtimeenvironment | frozenset(_flat_scalars(relation))

        else:
            current = getattr(job, attr)
            setattr(job, attr, current + _file_pairs(relation))

        seen.add(attr)

    return job.validate()


def _single_scalar(relation: Relation):
    if not relation.is_scalar:
        raise XrslValidationError('%s: expected a single value' % relation.attribute)
    return relation.values


def _flat_scalars(relation: Relation):
    if relation.is_scalar:
        return [relation.values]
    return [value for values in relation.values for value in values]


def _file_pairs(relation: Relation):
    if relation.is_scalar:
        raise XrslValidationError('%s: expected (name location) tuples' % relation.attribute)
    pairs = []
    for values in relation.values:
        if len(values) == 1:
            pairs.append((values[0], ''))
        elif len(values) == 2:
            pairs.append((values[0], values[1]))
        else:
            raise XrslValidationError('%s: tuples take a name and one location' % relation.attribute)
    return pairs


def parse_job(text) -> JobDescription:
    return to_job(parse(text))


def serialize(job: JobDescription) -> str:
    """
    Canonical xRSL: attributes sorted, every scalar double quoted,
    single space between tuples, unset fields omitted.
    """
    relations = {}
    for attr in INTEGER_ATTRIBUTES:
        value = getattr(job, attr)
        if value:
            relations[attr] = quote(str(value))
    for attr in STRING_ATTRIBUTES:
        value = getattr(job, attr)
        if value and not (attr == 'action' and value == 'submit'):
            relations[attr] = quote(value)
    if job.arguments:
        relations['arguments'] = _tuple(job.arguments)
    if job.runtimeenvironment:
        relations['runtimeenvironment'] = _tuple(sorted(job.runtimeenvironment))
    for attr in FILE_ATTRIBUTES:
        pairs = getattr(job, attr)
        if pairs:
            relations[attr] = ' '.join(_tuple(pair) for pair in pairs)

    return '&' + ''.join('(%s=%s)' % (attr, relations[attr]) for attr in sorted(relations))


def _tuple(values):
    return '(' + ' '.join(quote(v) for v in values) + ')'


def action_request(action) -> str:
    """The job control document sent for cancel and clean."""
    return serialize(JobDescription(action=action))

import unittest

import numpy as np

from grid_testbed.xrsl.job_description import (
    JobDescription, XrslValidationError, action_request, parse_job, serialize, to_job)
from grid_testbed.xrsl.parser import XrslParseError, parse

ALPHABET = list('abcXYZ09 _-./:"\\()=&\n\tø')


def random_text(rng, max_len=8):
    return ''.join(rng.choice(ALPHABET) for _ in range(rng.randint(1, max_len + 1)))


def random_job(rng):
    names = ['f%d' % i for i in range(rng.randint(0, 4))]
    return JobDescription(
        executable=random_text(rng),
        arguments=[random_text(rng) for _ in range(rng.randint(0, 3))],
        inputfiles=[(n, '' if rng.rand() < 0.5 else 'ngse://se1:39100/d/' + n) for n in names],
        outputfiles=[(n + '.out', '' if rng.rand() < 0.5 else 'ngse://se1:39100/o/%s?lfn=%s' % (n, n))
                     for n in names],
        cputime=int(rng.randint(0, 4000)),
        memory=int(rng.randint(0, 2048)),
        disk=int(rng.randint(0, 100)),
        runtimeenvironment=frozenset(random_text(rng) for _ in range(rng.randint(0, 3))),
        queue=random_text(rng) if rng.rand() < 0.3 else '',
        stdout='out.txt' if rng.rand() < 0.5 else '',
        notify='jane@uio.no' if rng.rand() < 0.3 else '',
        lifetime=int(rng.randint(0, 10)))


class TestParse(unittest.TestCase):

    def test_relations(self):
        doc = parse('&(executable="run.sh")(cputime=60)')
        self.assertEqual([(r.attribute, r.values) for r in doc.relations],
                         [('executable', 'run.sh'), ('cputime', '60')])

    def test_tuple(self):
        doc = parse('&(inputfiles=("data.in" "ngse://se1:39100/d/data.in"))')
        self.assertEqual(len(doc.relations), 1)
        self.assertEqual(doc.relations[0].values, [('data.in', 'ngse://se1:39100/d/data.in')])

    def test_names_fold_and_whitespace(self):
        doc = parse(' & ( CPUTime = 5 )\n( Arguments = ("a b" c) ("d") ) ')
        self.assertEqual(doc.attributes(), ['cputime', 'arguments'])
        self.assertEqual(doc.relations[1].values, [('a b', 'c'), ('d',)])

    def test_escapes(self):
        doc = parse(r'&(executable="say \"hi\" \\ bye")')
        self.assertEqual(doc.relations[0].values, 'say "hi" \\ bye')

    def test_error_offsets(self):
        cases = {
            '&(executable="a"': 17,
            '&(executable="a': 14,
            '(executable="a")': 1,
            '&': 2,
            '&(cputime=5))': 13,
        }
        for text, offset in cases.items():
            with self.assertRaises(XrslParseError, msg=text) as cm:
                parse(text)
            self.assertEqual(cm.exception.offset, offset, text)

    def test_empty_document(self):
        with self.assertRaises(XrslParseError):
            parse('   ')

    def test_offsets_count_bytes(self):
        with self.assertRaises(XrslParseError) as cm:
            parse('&(executable="ø"')
        self.assertEqual(cm.exception.offset, len('&(executable="ø"'.encode('utf-8')) + 1)

    def test_totality_fuzz(self):
        rng = np.random.RandomState(7)
        seed = '&(executable="a b")(arguments=("x" y))(inputfiles=("f" ""))'
        n_errors = 0
        for _ in range(2000):
            chars = list(seed)
            for _ in range(rng.randint(1, 5)):
                pos = rng.randint(len(chars) + 1)
                if rng.rand() < 0.5 and pos < len(chars):
                    del chars[pos]
                else:
                    chars.insert(pos, rng.choice(ALPHABET))
            text = ''.join(chars)
            try:
                parse(text)
            except XrslParseError as e:
                n_errors += 1
                self.assertTrue(1 <= e.offset <= len(text.encode('utf-8')) + 1)
        self.assertGreater(n_errors, 0)

    def test_invalid_utf8(self):
        with self.assertRaises(XrslParseError) as cm:
            parse(b'&(executable="\xff")')
        self.assertEqual(cm.exception.offset, 15)


class TestJobDescription(unittest.TestCase):

    def test_to_job(self):
        job = to_job(parse('&(executable="run.sh")(cputime=60)'))
        self.assertEqual(job, JobDescription(executable='run.sh', cputime=60))
        self.assertEqual(job.action, 'submit')

    def test_action(self):
        self.assertEqual(parse_job('&(action="cancel")'), JobDescription(action='cancel'))
        self.assertEqual(parse_job(action_request('clean')).action, 'clean')

    def test_validation_errors(self):
        cases = {
            '&(executable="a")(cputime="many")': 'cputime: not an integer',
            '&(executable="a")(colour="red")': 'colour: unknown attribute',
            '&(executable="a")(executable="b")': 'executable: duplicate attribute',
            '&(action="cancel")(inputfiles=("a" ""))': 'cancel request cannot carry staging',
            '&(cputime=5)': 'executable: required',
            '&(executable="a")(inputfiles=("x" "") ("x" "ngse://h:1/x"))': 'inputfiles: duplicate',
            '&(executable="a")(memory=-1)': 'memory: not an integer',
            '&(executable="a")(action="pause")': 'action: must be one of',
        }
        for text, message in cases.items():
            with self.assertRaises(XrslValidationError, msg=text) as cm:
                parse_job(text)
            self.assertIn(message, str(cm.exception))

    def test_uploads_and_retained_outputs(self):
        job = parse_job('&(executable="run.sh")(inputfiles=("run.sh" "") ("d" "rc:data"))'
                        '(outputfiles=("out" "") ("res" "ngse://se1:39100/r?lfn=r")')
        self.assertEqual(job.uploads, ['run.sh'])
        self.assertEqual(job.retained_outputs, ['out'])

    def test_serialize_canonical(self):
        self.assertEqual(serialize(JobDescription(executable='a', cputime=60)),
                         '&(cputime="60")(executable="a")')
        self.assertEqual(serialize(JobDescription(executable='x')), '&(executable="x")')
        job = JobDescription(executable='x', inputfiles=[('a', ''), ('b', 'ngse://h:1/b')],
                             runtimeenvironment=frozenset({'B', 'A'}))
        self.assertEqual(serialize(job), '&(executable="x")(inputfiles=("a" "") ("b" "ngse://h:1/b"))'
                                         '(runtimeenvironment=("A" "B"))')
        self.assertEqual(action_request('cancel'), '&(action="cancel")')

    def test_serialize_round_trip_property(self):
        rng = np.random.RandomState(3)
        for _ in range(200):
            job = random_job(rng)
            text = serialize(job)
            self.assertEqual(parse_job(text), job)
            # canonical form is a fixed point
            self.assertEqual(serialize(parse_job(text)), text)

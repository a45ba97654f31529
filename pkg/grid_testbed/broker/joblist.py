import logging
import os

logger = logging.getLogger(__name__)


class Defaults:
    path = os.path.join('~', '.ngjobs')


class JobList:
    """The client's record of submitted jobs: one "<gridid> <contact>" line each."""

    def __init__(self, path=None):
        self.path = os.path.expanduser(path or Defaults.path)

    def add(self, gridid, contact):
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write('%s %s\n' % (gridid, contact))

    def items(self):
        if not os.path.exists(self.path):
            return []
        jobs = {}
        with open(self.path, encoding='utf-8') as f:
            for line in f:
                parts = line.split()
                if len(parts) == 2:
                    jobs[parts[0]] = parts[1]
                elif parts:
                    logger.warning('%s: skipping malformed line %r', self.path, line)
        return list(jobs.items())

    def contact(self, gridid):
        return dict(self.items()).get(gridid)

    def remove(self, gridid):
        remaining = [(g, c) for g, c in self.items() if g != gridid]
        with open(self.path, 'w', encoding='utf-8') as f:
            f.writelines('%s %s\n' % item for item in remaining)

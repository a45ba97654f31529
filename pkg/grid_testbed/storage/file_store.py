"""A directory-backed file store which never touches paths outside its root."""
import logging
import os
import posixpath
import threading
import weakref

from grid_testbed.utils.atomic import atomic_copy_file, atomic_write_bytes
from grid_testbed.wire.transport import BadRequest, NotFound, Conflict

logger = logging.getLogger(__name__)

# one lock per absolute path, shared by every store instance over the same files
_path_locks = weakref.WeakValueDictionary()
_path_locks_lock = threading.Lock()


def _lock_for(full):
    with _path_locks_lock:
        lock = _path_locks.get(full)
        if lock is None:
            lock = _path_locks[full] = threading.Lock()
        return lock


def normalize(path):
    """
    '/a/./b' -> 'a/b'; '' or '/' -> '.'
    :raises BadRequest: for paths escaping the root
    """
    if '\x00' in path or '\\' in path:
        raise BadRequest('invalid characters in path %r' % path)
    rel = posixpath.normpath(path.lstrip('/') or '.')
    if rel == '..' or rel.startswith('../') or rel.startswith('/'):
        raise BadRequest('path escapes the store root: %r' % path)
    return rel


class FileStore:

    def __init__(self, root):
        self.root = os.path.realpath(root)
        os.makedirs(self.root, exist_ok=True)

    def resolve(self, path):
        rel = normalize(path)
        full = os.path.realpath(os.path.join(self.root, rel))
        if full != self.root and not full.startswith(self.root + os.sep):
            raise BadRequest('path escapes the store root: %r' % path)
        return full

    def exists(self, path):
        return os.path.isfile(self.resolve(path))

    def put(self, path, data, overwrite=False):
        full = self.resolve(path)
        if full == self.root:
            raise BadRequest('cannot write the store root')
        with _lock_for(full):
            if os.path.isdir(full):
                raise Conflict('%s is a directory' % path)
            if os.path.exists(full) and not overwrite:
                raise Conflict('%s exists, set "Overwrite: true" to replace it' % path)
            atomic_write_bytes(full, data)

    def copy_in(self, path, source_file, overwrite=True):
        """copies a local file into the store (local storage element access)"""
        full = self.resolve(path)
        with _lock_for(full):
            if os.path.exists(full) and not overwrite:
                raise Conflict('%s exists' % path)
            atomic_copy_file(source_file, full)

    def get(self, path):
        full = self.resolve(path)
        if not os.path.isfile(full):
            raise NotFound('no such file %s' % path)
        with open(full, 'rb') as f:
            return f.read()

    def stat(self, path):
        full = self.resolve(path)
        if not os.path.isfile(full):
            raise NotFound('no such file %s' % path)
        return os.path.getsize(full)

    def delete(self, path):
        full = self.resolve(path)
        if full == self.root:
            raise BadRequest('cannot delete the store root')
        with _lock_for(full):
            if not os.path.isfile(full):
                raise NotFound('no such file %s' % path)
            os.unlink(full)

    def list(self, prefix='/'):
        """
        :return: sorted (relative name, size) of files under the prefix directory
        """
        full = self.resolve(prefix)
        if os.path.isfile(full):
            return [(posixpath.basename(normalize(prefix)), os.path.getsize(full))]
        if not os.path.isdir(full):
            raise NotFound('no such directory %s' % prefix)
        listing = []
        for dirpath, _, filenames in os.walk(full):
            for filename in filenames:
                if filename.startswith('.') and filename.endswith('.tmp'):
                    continue
                path = os.path.join(dirpath, filename)
                listing.append((os.path.relpath(path, full).replace(os.sep, '/'),
                                os.path.getsize(path)))
        return sorted(listing)

    def used_bytes(self):
        return sum(size for _, size in self.list('/'))

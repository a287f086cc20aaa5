from __future__ import annotations
import os
import shutil
import tempfile
import urllib.parse

from typing import Dict, Callable, Tuple, List, Optional
from .error import LocationError

def handle_location_error(f: Callable[[ResourceLocator, any], any]) -> Callable[[ResourceLocator, ...], any]:
  def wrapper(self, *args, **kwargs):
    try:
      return f(self, *args, **kwargs)
    except (KeyboardInterrupt, SystemExit):
      raise
    except LocationError:
      raise
    except Exception as e:
      raise LocationError(url=self.url, error=e)
  return wrapper

class ResourceLocator:
  url: str

  @classmethod
  def append_locator_parameters(cls, url: str, parameters: Dict[str, any]) -> str:
    parts = urllib.parse.urlparse(url)
    query = urllib.parse.parse_qsl(parts.query) + [('locator', '1')] + [(k, parameters[k]) for k in sorted(parameters.keys())]
    return urllib.parse.urlunparse([*parts[:4], urllib.parse.urlencode(query), *parts[5:]])

  @classmethod
  def strip_locator_parameters(cls, url: str) -> Tuple[str, Dict[str, any]]:
    parts = urllib.parse.urlparse(url)
    query = urllib.parse.parse_qsl(parts.query)
    try:
      locator_index = len(query) - 1 - query[::-1].index(('locator', '1'))
    except ValueError:
      return (url, {})
    parameters = {
      t[0]: t[1]
      for t in query[locator_index + 1:]
    }
    query = query[:locator_index]
    url_without_locator_parameters = urllib.parse.urlunparse([*parts[:4], urllib.parse.urlencode(query), *parts[5:]])
    return (url_without_locator_parameters, parameters)

  @classmethod
  def locator_flag_value(cls, raw_value: any) -> bool:
    return str(raw_value).lower() in ['1', 'true', 't', 'yes', 'y']

  def __init__(self, url: str):
    self.url = url

  @property
  def locator_parameters(self) -> Dict[str, any]:
    return ResourceLocator.strip_locator_parameters(url=self.url)[1]

  @property
  def url_parts(self) -> urllib.parse.ParseResult:
    return urllib.parse.urlparse(ResourceLocator.strip_locator_parameters(url=self.url)[0])

  @handle_location_error
  def get(self) -> any:
    raise NotImplementedError()

  @handle_location_error
  def put(self, resource: any):
    raise NotImplementedError()

  @handle_location_error
  def delete(self):
    raise NotImplementedError()

  @handle_location_error
  def list(self) -> Optional[List[str]]:
    raise NotImplementedError()

def locator_factory(url: any) -> ResourceLocator:
  url = str(url)
  parts = urllib.parse.urlparse(url)
  if parts.scheme in ['file', '']:
    return FileLocator(url=url)
  raise LocationError(url=url, error=ValueError('Unsupported locator scheme', parts.scheme))

class FileLocator(ResourceLocator):
  @property
  def path(self) -> str:
    if self.url_parts.scheme == 'file':
      return urllib.parse.unquote(self.url_parts.path)
    return ResourceLocator.strip_locator_parameters(url=self.url)[0]

  @property
  def encoding(self) -> str:
    return self.locator_parameters.get('encoding', 'binary')

  @handle_location_error
  def get(self) -> any:
    encoding = self.encoding
    kwargs = {
      'file': self.path,
      'mode': 'rb' if encoding == 'binary' else 'r',
      **({'encoding': encoding, 'newline': ''} if encoding != 'binary' else {})
    }
    with open(**kwargs) as f:
      content = f.read()
    return content

  @handle_location_error
  def put(self, resource: any):
    """Writes the resource to a temporary sibling and renames it into place."""
    path = self.path
    if path.endswith('/'):
      os.makedirs(path, exist_ok=True)
      return
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    encoding = self.encoding
    if encoding != 'binary' and isinstance(resource, str):
      resource = resource.encode(encoding=encoding)
    handle, temp_path = tempfile.mkstemp(dir=directory, prefix=f'.{os.path.basename(path)}.', suffix='.tmp')
    try:
      with os.fdopen(handle, 'wb') as f:
        f.write(resource)
      os.replace(temp_path, path)
    except BaseException:
      if os.path.exists(temp_path):
        os.remove(temp_path)
      raise

  @handle_location_error
  def delete(self):
    path = self.path
    if path.endswith('/'):
      shutil.rmtree(path)
    else:
      os.remove(path)

  @handle_location_error
  def list(self) -> Optional[List[str]]:
    path = self.path
    if not os.path.exists(path):
      return None
    _, directories, files = next(os.walk(path))
    return sorted([
      *[f'{d}/' for d in directories],
      *files,
    ])

def read_bytes(path: any) -> bytes:
  return locator_factory(url=path).get()

def read_text(path: any, encoding: str='utf-8') -> str:
  return read_bytes(path=path).decode(encoding=encoding)

def write_bytes(path: any, resource: bytes):
  locator_factory(url=path).put(resource=resource)

def write_text(path: any, text: str, encoding: str='utf-8'):
  write_bytes(path=path, resource=text.encode(encoding=encoding))

from __future__ import annotations
import configparser

from typing import Dict, Optional
from .error import ConfigurationError
from .locator import ResourceLocator, read_text, write_text

class Options:
  """Typed attributes over an options dictionary, coerced to the types of the defaults."""
  defaults: Dict[str, any] = {}
  section: str = 'options'

  def __init__(self, options: Optional[Dict[str, any]]=None):
    merged = {**self.defaults, **(options if options is not None else {})}
    unknown = sorted(k for k in merged if k not in self.defaults)
    if unknown:
      raise ConfigurationError(key=unknown[0], value=merged[unknown[0]], reason='unknown option')
    for key, default in self.defaults.items():
      object.__setattr__(self, key, Options.coerce(key=key, value=merged[key], default=default))
    self.validate()

  def __setattr__(self, key: str, value: any):
    raise AttributeError(f'{type(self).__name__} is immutable; use replace()')

  def __eq__(self, other: any) -> bool:
    return type(other) is type(self) and other.dictionary_representation == self.dictionary_representation

  def __repr__(self) -> str:
    return f'{type(self).__name__}({self.dictionary_representation!r})'

  @staticmethod
  def coerce(key: str, value: any, default: any) -> any:
    try:
      if isinstance(default, bool):
        return value if isinstance(value, bool) else ResourceLocator.locator_flag_value(raw_value=value)
      if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
          raise ValueError('not an integer')
        return int(value)
      if isinstance(default, float):
        return float(value)
      if isinstance(default, list):
        items = [v.strip() for v in value.split(',') if v.strip()] if isinstance(value, str) else list(value)
        item_default = default[0] if default else ''
        return [Options.coerce(key=key, value=v, default=item_default) for v in items]
      if default is None:
        return None if value in [None, ''] else int(value)
      return str(value)
    except (KeyboardInterrupt, SystemExit):
      raise
    except ConfigurationError:
      raise
    except Exception as e:
      raise ConfigurationError(key=key, value=value, reason=f'cannot coerce to {type(default).__name__} ({e})')

  @classmethod
  def parse_text(cls, text: str) -> Dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#',), inline_comment_prefixes=('#',))
    parser.optionxform = str
    try:
      parser.read_string(f'[{cls.section}]\n{text}')
    except configparser.Error as e:
      raise ConfigurationError(key=cls.section, value=None, reason=f'malformed options text ({e})')
    return dict(parser.items(cls.section))

  @classmethod
  def from_text(cls, text: str, options: Optional[Dict[str, any]]=None) -> Options:
    return cls({**(options if options is not None else {}), **cls.parse_text(text=text)})

  @classmethod
  def from_file(cls, path: str, options: Optional[Dict[str, any]]=None) -> Options:
    return cls.from_text(text=read_text(path=path), options=options)

  @staticmethod
  def format_value(value: any) -> str:
    if isinstance(value, list):
      return ', '.join(Options.format_value(v) for v in value)
    if isinstance(value, float):
      return repr(value)
    if value is None:
      return ''
    return str(value)

  @property
  def dictionary_representation(self) -> Dict[str, any]:
    return {
      key: list(getattr(self, key)) if isinstance(getattr(self, key), list) else getattr(self, key)
      for key in self.defaults
    }

  def to_text(self) -> str:
    lines = [f'{k} = {Options.format_value(v)}' for k, v in self.dictionary_representation.items()]
    return '\n'.join(lines) + '\n'

  def write(self, path: str):
    write_text(path=path, text=self.to_text())

  def replace(self, **changes) -> Options:
    return type(self)({**self.dictionary_representation, **changes})

  def validate(self):
    pass

  def require(self, key: str, condition: bool, reason: str):
    if not condition:
      raise ConfigurationError(key=key, value=getattr(self, key), reason=reason)

"""Helper utility functions
"""
from __future__ import annotations
import json
import os
import pathlib


def build_inline_css_style_sheet(css_file_path:str|bytes, encoding:str='utf-8') -> str|None:
    """Read a .CSS file and wrap it in inline CSS `<style> </style>`

    Args:
        css_file_path (str | bytes): Path to CSS File
        encoding (str, optional): Files Encoding. Defaults to 'utf-8'.

    Returns:
        str|None: Inline CSS String | if error None
    """
    try:
        with open(css_file_path, encoding=encoding, mode='r') as file:
            return f"<style> {file.read()} </style>"
    except FileNotFoundError:
        return None


def ensure_parent_folder(path:str|os.PathLike) -> pathlib.Path:
    """Create the folder a file will be written into and return the path"""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def read_json_file(path:str|os.PathLike, encoding:str='utf-8') -> dict:
    """Load one JSON document from a file"""
    with open(path, encoding=encoding, mode='r') as file:
        return json.load(file)


def write_json_file(data:dict, path:str|os.PathLike, encoding:str='utf-8') -> None:
    """Write one JSON document with sorted keys, creating the parent folder"""
    with open(ensure_parent_folder(path), encoding=encoding, mode='w') as file:
        json.dump(data, file, indent=2, sort_keys=True)
        file.write('\n')

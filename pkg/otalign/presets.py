import os
import json
import glob
from pathlib import Path
from appdirs import user_data_dir

from otalign.__init__ import __version__
from otalign.exceptions import InvalidParameter
from otalign.utilities import warn

data_dir = user_data_dir("otalign", "otalign")

# Per-run arguments that never go into a preset
NOT_SAVED = ["save", "preset", "command", "inputs", "out", "gold", "seed"]


def preset_path(preset_name):
    return os.path.join(data_dir, f"{preset_name}.preset")


def check_preset_name(preset_name):
    if len(preset_name.strip()) == 0:
        raise InvalidParameter(
            "The preset name must contain at least one valid character"
        )


def read_preset_file(preset_name):
    """Content of a saved preset, or None if its JSON is invalid"""
    try:
        with open(preset_path(preset_name)) as f:
            return json.load(f)
    except json.decoder.JSONDecodeError:
        warn(f"Invalid JSON found for existing preset {preset_name} (in {data_dir})")
        return None


def save_preset(args, default_args):
    """
    Stores the solver and constraint flags that differ from their defaults.
    Existing presets of the same name are updated, not replaced.
    """
    preset_name = args.save
    check_preset_name(preset_name)

    params = dict(vars(args))
    default_params = vars(default_args)

    for k in NOT_SAVED:
        v = params.pop(k, None)
        if k in ("save", "preset") or v in (None, "", []) or v == default_params.get(k):
            continue
        warn(f"Ignoring the {k} argument")

    params = {
        k: v
        for k, v in params.items()
        if v is not None and v != default_params.get(k)
    }

    Path(data_dir).mkdir(parents=True, exist_ok=True)

    preset_json = {}
    if os.path.isfile(preset_path(preset_name)):
        preset_json = read_preset_file(preset_name) or {}

    preset_json.update(params)
    preset_json["version"] = __version__

    with open(preset_path(preset_name), "w") as out:
        json.dump(preset_json, out, indent=4)

    return preset_name


def load_preset(preset_name):
    check_preset_name(preset_name)

    if not os.path.isfile(preset_path(preset_name)):
        raise InvalidParameter(
            f"No preset found with the name {preset_name} (in {data_dir})"
        )

    preset_json = read_preset_file(preset_name) or {}
    preset_json.pop("version", None)
    return preset_json


def get_preset_names():
    paths = glob.glob(os.path.join(data_dir, "*.preset"))
    return sorted(os.path.splitext(os.path.basename(p))[0] for p in paths)


def is_preset(preset_name):
    if preset_name in get_preset_names():
        return True

    print(f"Unknown preset: '{preset_name}'")
    print("")
    return False


def list_presets():
    print("--- Available presets:")
    for name in get_preset_names():
        print(name)


def print_preset(preset_name):
    if not os.path.isfile(preset_path(preset_name)):
        raise InvalidParameter(
            f"No preset called {preset_name} found in your user directory ({data_dir})"
        )

    preset_json = read_preset_file(preset_name)
    if preset_json is None:
        return

    print(f"--- Saved preset '{preset_name}'")
    for k, v in preset_json.items():
        print(f"{k:<30}{str(v):<30}")

import os
import sys

from voxcascade import VoxCascade
from voxcascade.logic.volume import save_volume

# load config from a JSON file (or anything outputting a python dictionary)
config = {
    "valid_margin": 4,
    "threads": 4
}

if __name__ == '__main__':

    # create a VoxCascade instance
    vc = VoxCascade(config)

    if len(sys.argv) > 1:
        checkpoints = vc.load_checkpoints("checkpoints")
        outputs = vc.translate(vc.read_volume(sys.argv[1]), checkpoints)
        name = os.path.splitext(os.path.basename(sys.argv[1]))[0]
        save_volume(outputs[-1], f"{name}.translated.vol")
    else:
        print("No arguments provided.")

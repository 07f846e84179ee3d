from voxcascade import VoxCascade

# load config from a JSON file (or anything outputting a python dictionary)
config = {
    "lr_side": 64,
    "patch_side": 32,
    "threads": 4,
    "training": {
        "epochs": 10,
        "patches_per_volume": 8
    }
}

if __name__ == '__main__':

    # create a VoxCascade instance
    vc = VoxCascade(config)

    # Train every scale on the volumes of the directory we give it
    vc.train_directory("volumes", "checkpoints")

//! Built-in CIFAR-100 taxonomy: 100 fine classes under 20 superclasses.

/// Superclass names, indexed by coarse label.
pub const COARSE_NAMES: [&str; 20] = [
    "aquatic mammals",
    "fish",
    "flowers",
    "food containers",
    "fruit and vegetables",
    "household electrical devices",
    "household furniture",
    "insects",
    "large carnivores",
    "large man-made outdoor things",
    "large natural outdoor scenes",
    "large omnivores and herbivores",
    "medium mammals",
    "non-insect invertebrates",
    "people",
    "reptiles",
    "small mammals",
    "trees",
    "vehicles 1",
    "vehicles 2",
];

/// Fine class names, indexed by fine label.
pub const FINE_NAMES: [&str; 100] = [
    "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle", "bicycle", "bottle",
    "bowl", "boy", "bridge", "bus", "butterfly", "camel", "can", "castle", "caterpillar", "cattle",
    "chair", "chimpanzee", "clock", "cloud", "cockroach", "couch", "crab", "crocodile", "cup", "dinosaur",
    "dolphin", "elephant", "flatfish", "forest", "fox", "girl", "hamster", "house", "kangaroo", "keyboard",
    "lamp", "lawn_mower", "leopard", "lion", "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain",
    "mouse", "mushroom", "oak_tree", "orange", "orchid", "otter", "palm_tree", "pear", "pickup_truck", "pine_tree",
    "plain", "plate", "poppy", "porcupine", "possum", "rabbit", "raccoon", "ray", "road", "rocket",
    "rose", "sea", "seal", "shark", "shrew", "skunk", "skyscraper", "snail", "snake", "spider",
    "squirrel", "streetcar", "sunflower", "sweet_pepper", "table", "tank", "telephone", "television", "tiger", "tractor",
    "train", "trout", "tulip", "turtle", "wardrobe", "whale", "willow_tree", "wolf", "woman", "worm",
];

/// Superclass of each fine class.
pub const FINE_TO_COARSE: [usize; 100] = [
    4, 1, 14, 8, 0, 6, 7, 7, 18, 3, //
    3, 14, 9, 18, 7, 11, 3, 9, 7, 11, //
    6, 11, 5, 10, 7, 6, 13, 15, 3, 15, //
    0, 11, 1, 10, 12, 14, 16, 9, 11, 5, //
    5, 19, 8, 8, 15, 13, 14, 17, 18, 10, //
    16, 4, 17, 4, 2, 0, 17, 4, 18, 17, //
    10, 3, 2, 12, 12, 16, 12, 1, 9, 19, //
    2, 10, 0, 1, 16, 12, 9, 13, 15, 13, //
    16, 19, 2, 4, 6, 19, 5, 5, 8, 19, //
    18, 1, 2, 15, 6, 0, 17, 8, 14, 13,
];

/// Superclass groupings that coarsen the 20 superclasses to 10.
pub const MERGE_TO_10: [&[usize]; 10] = [
    &[0, 1],
    &[2, 17],
    &[3, 4],
    &[5, 6],
    &[12, 16],
    &[8, 11],
    &[14, 15],
    &[9, 10],
    &[7, 13],
    &[18, 19],
];

/// Superclass groupings that coarsen the 20 superclasses to 5.
pub const MERGE_TO_5: [&[usize]; 5] = [
    &[0, 1, 12, 16],
    &[2, 17, 3, 4],
    &[5, 6, 9, 10],
    &[8, 11, 18, 19],
    &[7, 13, 14, 15],
];

/// Superclass groupings that coarsen the 20 superclasses to 2.
pub const MERGE_TO_2: [&[usize]; 2] = [
    &[0, 1, 7, 8, 11, 12, 13, 14, 15, 16],
    &[2, 3, 4, 5, 6, 9, 10, 17, 18, 19],
];

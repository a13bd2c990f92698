//! Hand-labeled OxfordPets concepts and a scripted model that answers DSS
//! prompts from these labels. Used only to (re)record the golden fixtures.

use std::collections::HashMap;

pub const MODEL: &str = "scripted-oxford-pets";

pub type Labeled = (&'static str, &'static [(&'static str, &'static str)]);

pub const PETS: &[Labeled] = &[
    ("Abyssinian", &[
        ("fur", "short ticked coat"),
        ("color", "ruddy brown with darker ticking"),
        ("ears", "large pointed ears"),
        ("eyes", "almond-shaped green or gold eyes"),
        ("body", "lithe muscular body"),
        ("temperament", "active and curious"),
        ("origin", "thought to come from Ethiopia"),
    ]),
    ("American Bulldog", &[
        ("build", "stocky muscular build"),
        ("head", "broad square head"),
        ("muzzle", "short wide muzzle"),
        ("coat", "short smooth coat"),
        ("color", "mostly white with patches"),
        ("size", "large dog"),
        ("legs", "thick sturdy legs"),
    ]),
    ("American Pit Bull Terrier", &[
        ("head", "wide flat head"),
        ("build", "compact athletic build"),
        ("coat", "short glossy coat"),
        ("tail", "thin tapering tail"),
        ("ears", "small half-pricked ears"),
        ("size", "medium-sized dog"),
        ("temperament", "confident and eager"),
    ]),
    ("Basset Hound", &[
        ("ears", "very long droopy ears"),
        ("legs", "short crooked legs"),
        ("body", "long low body"),
        ("face", "wrinkled face"),
        ("eyes", "sad droopy eyes"),
        ("color", "tricolor black tan and white"),
        ("nose", "large dark nose"),
    ]),
    ("Beagle", &[
        ("color", "tricolor coat of black tan and white"),
        ("ears", "long rounded floppy ears"),
        ("size", "small to medium hound"),
        ("tail", "white-tipped upright tail"),
        ("eyes", "large brown eyes"),
        ("muzzle", "square medium muzzle"),
        ("breed", "scent hound breed"),
    ]),
    ("Bengal", &[
        ("fur", "spotted or marbled fur"),
        ("color", "golden background with dark rosettes"),
        ("body", "long muscular body"),
        ("appearance", "wild leopard-like appearance"),
        ("whiskers", "thick white whiskers"),
        ("eyes", "green or gold eyes"),
        ("breed", "hybrid domestic cat breed"),
    ]),
    ("Birman", &[
        ("color", "colorpoint pattern with darker face"),
        ("legs", "white gloved paws"),
        ("eyes", "deep blue eyes"),
        ("fur", "long silky fur"),
        ("body", "medium stocky body"),
        ("origin", "sacred cat of Burma"),
    ]),
    ("Bombay", &[
        ("color", "solid jet black"),
        ("coat", "short glossy coat"),
        ("eyes", "copper round eyes"),
        ("head", "rounded head"),
        ("appearance", "looks like a miniature panther"),
        ("size", "medium-sized cat"),
    ]),
    ("Boxer", &[
        ("muzzle", "short blunt muzzle"),
        ("head", "square head with pronounced jaw"),
        ("build", "strong muscular build"),
        ("color", "fawn or brindle with white markings"),
        ("legs", "long straight legs"),
        ("ears", "ears folded forward"),
        ("temperament", "playful and energetic"),
    ]),
    ("British Shorthair", &[
        ("fur", "dense plush fur"),
        ("color", "blue-grey"),
        ("face", "round face with full cheeks"),
        ("eyes", "large round copper eyes"),
        ("build", "cobby stocky build"),
        ("whiskers", "short curved whiskers"),
        ("breed", "old British cat breed"),
    ]),
    ("Chihuahua", &[
        ("size", "very small toy dog"),
        ("head", "apple-shaped head"),
        ("ears", "large upright ears"),
        ("eyes", "big round protruding eyes"),
        ("coat", "smooth or long coat"),
        ("legs", "thin delicate legs"),
        ("origin", "from Mexico"),
    ]),
    ("Egyptian Mau", &[
        ("coat", "naturally spotted coat"),
        ("color", "silver bronze or smoke"),
        ("eyes", "gooseberry green eyes"),
        ("legs", "hind legs longer than front legs"),
        ("appearance", "forehead with scarab-like M marking"),
        ("whiskers", "fine whiskers"),
    ]),
    ("English Cocker Spaniel", &[
        ("ears", "long feathered ears"),
        ("coat", "silky wavy coat"),
        ("color", "solid or parti-colored"),
        ("head", "gently domed head"),
        ("tail", "docked tail"),
        ("size", "medium-sized gundog"),
        ("breed", "spaniel breed"),
    ]),
    ("English Setter", &[
        ("coat", "long flat feathered coat"),
        ("color", "white with speckled belton markings"),
        ("body", "elegant athletic body"),
        ("head", "long lean head"),
        ("tail", "feathered tail carried straight"),
        ("legs", "feathering on the legs"),
    ]),
    ("German Shorthaired", &[
        ("coat", "short dense coat"),
        ("color", "liver and white ticked"),
        ("nose", "brown nose"),
        ("body", "lean powerful body"),
        ("tail", "docked tail"),
        ("ears", "broad hanging ears"),
        ("breed", "pointer breed"),
    ]),
    ("Great Pyrenees", &[
        ("size", "very large dog"),
        ("coat", "thick double coat"),
        ("color", "all white or white with grey badger markings"),
        ("tail", "plumed tail"),
        ("legs", "double dewclaws on hind legs"),
        ("temperament", "calm and watchful"),
    ]),
    ("Havanese", &[
        ("coat", "long silky wavy coat"),
        ("size", "small toy dog"),
        ("tail", "plumed tail curled over the back"),
        ("eyes", "dark almond eyes"),
        ("appearance", "sturdy little dog with a springy gait"),
        ("origin", "national dog of Cuba"),
    ]),
    ("Japanese Chin", &[
        ("face", "flat face"),
        ("snout", "very short snout"),
        ("eyes", "wide-set large eyes"),
        ("coat", "silky long coat"),
        ("color", "black and white or red and white"),
        ("size", "small toy dog"),
        ("tail", "plumed tail over the back"),
    ]),
    ("Keeshond", &[
        ("coat", "thick plush double coat"),
        ("color", "grey black and cream"),
        ("appearance", "spectacles markings around the eyes"),
        ("tail", "curled plumed tail"),
        ("ears", "small triangular upright ears"),
        ("muzzle", "medium wedge-shaped muzzle"),
        ("breed", "spitz breed"),
    ]),
    ("Leonberger", &[
        ("size", "giant dog"),
        ("coat", "long water-resistant coat"),
        ("color", "lion-yellow to red-brown"),
        ("face", "black mask on the face"),
        ("body", "muscular well-balanced body"),
        ("temperament", "gentle and friendly"),
    ]),
    ("Maine Coon", &[
        ("size", "very large cat"),
        ("coat", "shaggy long coat"),
        ("ears", "tufted ears"),
        ("tail", "long bushy tail"),
        ("whiskers", "long whiskers"),
        ("body", "long rectangular body"),
        ("breed", "American longhair breed"),
    ]),
    ("Miniature Pinscher", &[
        ("size", "small toy dog"),
        ("color", "black and rust or red"),
        ("ears", "high-set upright ears"),
        ("legs", "high-stepping legs"),
        ("coat", "short hard coat"),
        ("appearance", "looks like a small Doberman"),
    ]),
    ("Newfoundland", &[
        ("size", "giant dog"),
        ("coat", "heavy water-resistant coat"),
        ("color", "black brown or grey"),
        ("head", "massive broad head"),
        ("legs", "webbed feet"),
        ("temperament", "sweet and patient"),
        ("origin", "bred in Newfoundland"),
    ]),
    ("Persian", &[
        ("fur", "very long flowing fur"),
        ("appearance", "luxurious glamorous look"),
        ("face", "flat face"),
        ("nose", "short snub nose"),
        ("eyes", "large round eyes"),
        ("build", "cobby heavily boned build"),
        ("temperament", "quiet and placid"),
    ]),
    ("Pomeranian", &[
        ("size", "tiny toy dog"),
        ("coat", "fluffy double coat"),
        ("tail", "plumed tail over the back"),
        ("muzzle", "short fox-like muzzle"),
        ("ears", "small erect ears"),
        ("color", "orange cream or sable"),
        ("breed", "spitz breed"),
    ]),
    ("Pug", &[
        ("face", "wrinkled flat face"),
        ("snout", "short square snout"),
        ("eyes", "large dark prominent eyes"),
        ("tail", "tightly curled tail"),
        ("body", "compact square body"),
        ("color", "fawn with black mask"),
        ("size", "small dog"),
    ]),
    ("Ragdoll", &[
        ("size", "large cat"),
        ("eyes", "bright blue eyes"),
        ("coat", "semi-long silky coat"),
        ("color", "colorpoint with mitted or bicolor pattern"),
        ("body", "long heavy body"),
        ("temperament", "goes limp when picked up"),
    ]),
    ("Russian Blue", &[
        ("coat", "dense short double coat"),
        ("color", "silver-tipped blue-grey"),
        ("eyes", "vivid green eyes"),
        ("build", "fine-boned elegant build"),
        ("head", "wedge-shaped head"),
        ("origin", "from the port of Arkhangelsk"),
    ]),
    ("Saint Bernard", &[
        ("size", "giant dog"),
        ("color", "red and white"),
        ("head", "massive head"),
        ("face", "dark mask on the face"),
        ("eyes", "droopy eyes"),
        ("coat", "rough or smooth coat"),
        ("breed", "Alpine rescue breed"),
    ]),
    ("Samoyed", &[
        ("coat", "thick white fluffy coat"),
        ("appearance", "smiling expression with upturned mouth corners"),
        ("tail", "tail curled over the back"),
        ("ears", "thick triangular erect ears"),
        ("size", "medium-large dog"),
        ("breed", "spitz breed"),
    ]),
    ("Scottish Terrier", &[
        ("coat", "wiry harsh coat"),
        ("color", "black brindle or wheaten"),
        ("legs", "short sturdy legs"),
        ("appearance", "distinctive beard and eyebrows"),
        ("ears", "small prick ears"),
        ("body", "compact low body"),
        ("breed", "terrier breed"),
    ]),
    ("Shiba Inu", &[
        ("color", "red sesame or black and tan"),
        ("tail", "curled tail"),
        ("ears", "small triangular erect ears"),
        ("muzzle", "fox-like muzzle"),
        ("size", "small to medium dog"),
        ("breed", "Japanese spitz breed"),
        ("origin", "ancient Japanese breed"),
    ]),
    ("Siamese", &[
        ("color", "pale body with dark points"),
        ("eyes", "blue almond-shaped eyes"),
        ("head", "long wedge-shaped head"),
        ("body", "slender tubular body"),
        ("ears", "large wide-set ears"),
        ("coat", "short fine coat"),
    ]),
    ("Sphynx", &[
        ("appearance", "hairless wrinkled skin"),
        ("ears", "very large bat-like ears"),
        ("body", "muscular pot-bellied body"),
        ("eyes", "lemon-shaped eyes"),
        ("head", "prominent cheekbones"),
        ("breed", "hairless cat breed"),
    ]),
    ("Staffordshire Bull Terrier", &[
        ("head", "short deep head with broad skull"),
        ("build", "muscular stocky build"),
        ("muzzle", "short muzzle"),
        ("coat", "short smooth coat"),
        ("color", "red fawn brindle or black"),
        ("legs", "wide-set legs"),
        ("size", "medium-sized dog"),
    ]),
    ("Wheaten Terrier", &[
        ("coat", "soft silky wavy coat"),
        ("color", "wheaten color"),
        ("head", "rectangular head"),
        ("appearance", "shaggy face with fall over the eyes"),
        ("tail", "docked upright tail"),
        ("breed", "Irish terrier breed"),
    ]),
    ("Yorkshire Terrier", &[
        ("coat", "long straight silky coat"),
        ("color", "steel blue and tan"),
        ("size", "tiny toy dog"),
        ("ears", "small V-shaped erect ears"),
        ("head", "small flat head"),
        ("appearance", "hair often tied up on the head"),
        ("temperament", "feisty and brave"),
    ]),
];

/// Synonym groups the scripted model reports, canonical word first.
pub const SYNONYMS: &[&[&str]] = &[
    &["fur", "coat"],
    &["body", "build"],
    &["snout", "muzzle", "nose"],
    &["head", "face"],
];

pub const NON_VISUAL: &[&str] = &["temperament", "origin"];

fn label_table() -> HashMap<&'static str, &'static str> {
    PETS.iter()
        .flat_map(|(_, cs)| cs.iter().map(|(a, c)| (*c, *a)))
        .collect()
}

fn quoted_list(s: &str) -> Vec<String> {
    let start = s.find('[').expect("list in prompt");
    let end = start + s[start..].find(']').expect("list end");
    s[start + 1..end]
        .split(", ")
        .filter(|w| !w.is_empty())
        .map(|w| w.trim_matches('\'').to_string())
        .collect()
}

fn canonical(word: &str) -> &str {
    SYNONYMS
        .iter()
        .find(|g| g.contains(&word))
        .map(|g| g[0])
        .unwrap_or(word)
}

/// Answers every DSS prompt from the labels above.
pub fn answer(prompt: &str) -> String {
    if prompt.starts_with("Your task is to extract") {
        let labels = label_table();
        let pairs: Vec<String> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .map(|c| format!("'{}': '{}'", labels[c], c))
            .collect();
        format!("```python\n{{{}}}\n```", pairs.join(", "))
    } else if prompt.starts_with("Your task is to merge") {
        let words = quoted_list(prompt.lines().find(|l| l.starts_with("Please merge")).unwrap());
        let mut groups: Vec<Vec<String>> = Vec::new();
        for w in &words {
            let canon = canonical(w);
            match groups.iter_mut().find(|g| canonical(&g[0]) == canon) {
                Some(g) => {
                    g.push(w.clone());
                    g.sort_by_key(|x| if x == canon { 0 } else { 1 });
                }
                None => groups.push(vec![w.clone()]),
            }
        }
        groups
            .iter()
            .map(|g| format!("[{}]", g.iter().map(|w| format!("'{w}'")).collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join("\n")
    } else if prompt.starts_with("Suppose you have some photos") {
        quoted_list(prompt)
            .iter()
            .map(|a| format!("{a}: {}", if NON_VISUAL.contains(&a.as_str()) { "no" } else { "yes" }))
            .collect::<Vec<_>>()
            .join("\n")
    } else if prompt.starts_with("Your task is to describe") {
        let line = prompt.lines().find(|l| l.starts_with("Please describe")).unwrap();
        let rest = line.strip_prefix("Please describe the attribute ").unwrap();
        let (attribute, rest) = rest.split_once(" of the class ").unwrap();
        let class = rest.split(" according to").next().unwrap();
        format!("{attribute} typical of the {class}")
    } else {
        panic!("unexpected prompt: {prompt}")
    }
}

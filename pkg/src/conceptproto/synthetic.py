"""Synthetic balanced liability corpus with planted, gold-annotated concept sentences.

Each document is 3-8 template sentences.  The planted concept sentences
determine the class label, and every plant is recorded as a gold annotation,
so the corpus doubles as its own localization oracle.  Output is fully
deterministic under a fixed seed.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .sentences import split_sentences
from .types import ConceptAnnotation, ConceptSchema, Document

CLASSES = ["Not Liable", "Split Liability", "Liable"]

CONCEPTS = [
    "IV Liable",
    "IV Not Liable",
    "IV Defensive Action",
    "IV No Defensive Action",
    "CV Liable",
    "CV Not Liable",
    "CV Defensive Action",
    "CV No Defensive Action",
]

# Expert sign prior: how each concept should push each class.
SIGNS = {
    "IV Liable":              {"Not Liable": -1, "Split Liability": +1, "Liable": +1},
    "IV Not Liable":          {"Not Liable": +1, "Split Liability": -1, "Liable": -1},
    "IV Defensive Action":    {"Not Liable": +1, "Split Liability": -1, "Liable": -1},
    "IV No Defensive Action": {"Not Liable": -1, "Split Liability": +1, "Liable": +1},
    "CV Liable":              {"Not Liable": +1, "Split Liability": +1, "Liable": -1},
    "CV Not Liable":          {"Not Liable": -1, "Split Liability": -1, "Liable": +1},
    "CV Defensive Action":    {"Not Liable": -1, "Split Liability": -1, "Liable": +1},
    "CV No Defensive Action": {"Not Liable": +1, "Split Liability": +1, "Liable": -1},
}

TEMPLATES = {
    "IV Liable": [
        "The insured driver ran a red light at the junction.",
        "Our insured ran straight through a red light.",
        "The insured vehicle went through the intersection on a red light.",
        "The insured admitted to running the red light.",
        "Witnesses saw the insured run the red light.",
        "The insured failed to stop for a red light.",
    ],
    "IV Not Liable": [
        "The insured was lawfully parked at the kerb when struck.",
        "The insured vehicle was stationary and lawfully parked.",
        "The insured had parked legally moments before the arrival of the claimant.",
        "The insured car sat parked and unoccupied at the kerb.",
        "The insured remained stationary in a marked parking bay.",
        "The insured was parked well inside the marked bay.",
    ],
    "IV Defensive Action": [
        "The insured braked hard and swerved to avoid the hazard.",
        "The insured driver swerved sharply and braked to avoid contact.",
        "The insured took evasive action by braking and swerving away.",
        "The insured braked firmly and steered wide of the danger.",
        "The insured swerved onto the verge while braking heavily.",
        "The insured reacted by braking hard and swerving clear.",
    ],
    "IV No Defensive Action": [
        "The insured made no attempt to slow down before the impact.",
        "The insured never touched the pedal and made no attempt to stop.",
        "The insured made no attempt to alter course before the collision.",
        "The insured carried on without any attempt to slow or stop.",
        "The insured showed no attempt whatsoever to reduce speed.",
        "The insured kept going and made no attempt to slow.",
    ],
    "CV Liable": [
        "The claimant driver ran a stop sign at considerable speed.",
        "The claimant sped through a stop sign without pausing.",
        "The claimant vehicle ignored the stop sign completely.",
        "The claimant was speeding and blew past the stop sign.",
        "The claimant rolled through the stop sign while speeding.",
        "The claimant failed to halt at the stop sign.",
    ],
    "CV Not Liable": [
        "The claimant was proceeding correctly with the right of way.",
        "The claimant had the right of way and was proceeding normally.",
        "The claimant drove properly within the marked lane throughout.",
        "The claimant was travelling normally and held the right of way.",
        "The claimant proceeded lawfully along the correct lane.",
        "The claimant kept to the proper lane with the right of way.",
    ],
    "CV Defensive Action": [
        "The claimant steered aside and eased off to avert contact.",
        "The claimant eased off the accelerator and steered clear.",
        "The claimant pulled aside promptly to avert the collision.",
        "The claimant steered wide and eased down to avert harm.",
        "The claimant responded by steering aside and easing off.",
        "The claimant eased back and steered away in time.",
    ],
    "CV No Defensive Action": [
        "The claimant kept accelerating and never reacted before the end.",
        "The claimant continued accelerating without reacting at all.",
        "The claimant was oblivious and kept accelerating until the crash.",
        "The claimant never reacted and maintained full acceleration.",
        "The claimant carried on accelerating with no reaction whatsoever.",
        "The claimant showed no reaction and kept accelerating.",
    ],
}

FILLERS = [
    "The weather that morning was clear and dry.",
    "Traffic along the avenue was moderate at the time.",
    "Both parties exchanged insurance details at the scene.",
    "The road surface was in good condition.",
    "A police report was filed later the same afternoon.",
    "The collision occurred near the shopping district.",
    "A bystander photographed the scene shortly afterwards.",
    "Neither driver reported any injuries at the scene.",
    "The vehicles were moved to the shoulder soon afterwards.",
    "An ambulance attended as a precaution.",
    "The incident happened during the evening commute.",
    "Damage was confined to the bumpers and one wing.",
]

# Plants that force each label; optional plants stay sign-consistent.
PLANT_PLAN = {
    "Liable": (
        ["IV Liable", "CV Not Liable"],
        ["IV No Defensive Action", "CV Defensive Action"],
    ),
    "Not Liable": (
        ["CV Liable", "IV Not Liable"],
        ["CV No Defensive Action", "IV Defensive Action"],
    ),
    "Split Liability": (
        ["IV Liable", "CV Liable"],
        ["IV No Defensive Action", "CV No Defensive Action"],
    ),
}


def liability_schema() -> ConceptSchema:
    schema = ConceptSchema(classes=list(CLASSES), concepts=list(CONCEPTS), signs=dict(SIGNS))
    schema.validate()
    return schema


def _split_counts(n: int) -> tuple[int, int, int]:
    # 90/5/5 per class; from three documents up every split is non-empty.
    if n < 3:
        return n, 0, 0
    n_val = max(1, round(n * 0.05))
    n_test = max(1, round(n * 0.05))
    return n - n_val - n_test, n_val, n_test


def generate_synthetic_liability(
    n_per_class: int, seed: int
) -> tuple[list[Document], list[ConceptAnnotation], ConceptSchema]:
    """Emit a balanced three-class corpus with gold plant annotations."""
    if n_per_class < 1:
        raise DataError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    schema = liability_schema()

    documents: list[Document] = []
    annotations: list[ConceptAnnotation] = []

    for label in CLASSES:
        required, optional = PLANT_PLAN[label]
        n_train, n_val, n_test = _split_counts(n_per_class)
        slug = "".join(w[0].lower() for w in label.split())
        for i in range(n_per_class):
            plants = list(required) + [c for c in optional if rng.random() < 0.5]
            n_sent = max(int(rng.integers(3, 9)), len(plants))

            positions = rng.choice(n_sent, size=len(plants), replace=False)
            sentence_texts: list[str | None] = [None] * n_sent
            plant_at: dict[int, str] = {}
            for concept, pos in zip(plants, positions):
                templates = TEMPLATES[concept]
                sentence_texts[pos] = templates[int(rng.integers(len(templates)))]
                plant_at[int(pos)] = concept

            free = [j for j in range(n_sent) if sentence_texts[j] is None]
            fillers = rng.choice(len(FILLERS), size=len(free), replace=False)
            for j, f in zip(free, fillers):
                sentence_texts[j] = FILLERS[int(f)]

            text = " ".join(sentence_texts)  # type: ignore[arg-type]
            ranges = split_sentences(text)
            if len(ranges) != n_sent:
                raise AssertionError(
                    f"template corpus must segment cleanly: got {len(ranges)} of {n_sent}"
                )

            split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
            doc = Document(
                id=f"synth-{slug}-{i:05d}",
                text=text,
                label=label,
                split=split,
                sentences=ranges,
            )
            doc.validate(schema)
            documents.append(doc)

            for pos, concept in sorted(plant_at.items()):
                start, end = ranges[pos]
                annotations.append(
                    ConceptAnnotation(doc.id, concept, start, end, vendor="gold")
                )

    return documents, annotations, schema

"""UniMorph feature inventory and annotation canonicalization."""

import re

from .exceptions import InvalidTag

# Feature -> UniMorph dimension (attribute). Person/number/case combinations
# used only inside possessive markers are omitted.
_DIMENSIONS = {
    "Aktionsart": "STAT DYN TEL ATEL PCT DUR ACH ACCMP SEMEL ACTY",
    "Animacy": "ANIM INAN HUM NHUM",
    "Aspect": "IPFV PFV PRF PROG PROSP ITER HAB",
    "Case": (
        "NOM ACC ERG ABS NOMS DAT BEN PRP GEN REL PRT INS COM VOC COMPV EQTV PRIV PROPR "
        "AVR FRML TRANS BYWAY INTER AT POST IN CIRC ANTE APUD ON ONHR ONVR SUB REM PROXM "
        "ESS ALL ABL APPRX TERM"
    ),
    "Comparison": "CMPR SPRL AB RL EQT",
    "Definiteness": "DEF INDF SPEC NSPEC",
    "Deixis": "PROX MED REMT REF1 REF2 NOREF PHOR VIS NVIS ABV EVEN BEL",
    "Evidentiality": "FH DRCT SEN VISU NVSEN AUD NFH QUOT RPRT HRSY INFER ASSUM",
    "Finiteness": "FIN NFIN",
    "Gender": "MASC FEM NEUT " + " ".join(f"NAKH{i}" for i in range(1, 9))
    + " " + " ".join(f"BANTU{i}" for i in range(1, 24)),
    "InformationStructure": "TOP FOC",
    "Interrogativity": "DECL INT",
    "Mood": (
        "IND SBJV REAL IRR AUPRP AUNPRP IMPRS JUS CND PURP INTEN POT LKLY ADM OBLIG DEB "
        "PERM DED SIM IMP OPT HORT DES"
    ),
    "Number": "SG PL GRPL DU TRI PAUC GRPAUC INVN",
    "PartOfSpeech": (
        "N PROPN ADJ PRO CLF ART DET V ADV AUX V.PTCP V.MSDR V.CVB ADP COMP CONJ NUM PART INTJ"
    ),
    "Person": "0 1 2 3 4 INCL EXCL PRX OBV",
    "Polarity": "POS NEG",
    "Politeness": "INFM FORM ELEV HUMB POL AVOID LOW HIGH STELEV STSUPR LIT FOREG COL",
    "Possession": "ALN NALN PSSD",
    "Switch-Reference": "SS SSADV DS DSADV SIMMA SEQMA LOG",
    "Tense": "PRS PST FUT IMMED HOD 1DAY RCT RMT",
    "Valency": "INTR TR DITR REFL RECP CAUS APPL",
    "Voice": "ACT MID PASS ANTIP DIR INV AGFOC PFOC LFOC BFOC ACFOC IFOC CFOC",
}

FEATURE_DIMENSION = {}
for _dim, _feats in _DIMENSIONS.items():
    for _f in _feats.split():
        FEATURE_DIMENSION.setdefault(_f, _dim)

# Compound annotations admitted as a single value of one attribute.
SPECIAL_VALUES = {frozenset({"PST", "PRF"}): ("Tense", "PST+PRF")}

_DISJUNCTION = re.compile(r"\|")


def attribute_of(feature):
    """UniMorph dimension of a single feature, or ``None`` if unknown."""
    return FEATURE_DIMENSION.get(feature)


def is_language_specific(feature):
    return feature.upper().startswith("LGSPEC")


def canonicalize_annotation(raw, attribute=None):
    """Canonical form of one annotation value, or ``None`` if it is rejected.

    Rejects disjunctions (``|`` or an ``OR`` constituent), strips brace
    typos, drops language-specific constituents, admits ``PST+PRF`` as a
    tense, and sorts a conjunction alphabetically. Raises :class:`InvalidTag`
    when the conjoined features belong to different attributes.
    """
    text = raw.strip()
    if not text or _DISJUNCTION.search(text):
        return None
    text = text.replace("{", "").replace("}", "")
    parts = [p.strip() for p in text.split("+")]
    if any(p.upper() == "OR" or " OR " in f" {p} " for p in parts):
        return None
    parts = [p for p in parts if p and not is_language_specific(p)]
    if not parts:
        return None
    special = SPECIAL_VALUES.get(frozenset(parts))
    if special is not None and len(parts) == len(set(parts)):
        return special[1]
    dims = {attribute_of(p) for p in parts} - {None}
    if attribute in _DIMENSIONS and len(parts) > 1:
        dims.add(attribute)
    if len(dims) > 1:
        raise InvalidTag(f"conjunction {raw!r} spans attributes {sorted(dims)}")
    return "+".join(sorted(set(parts)))


def canonicalize_tag(raw_tag):
    """Canonicalize an annotation; alias of :func:`canonicalize_annotation`."""
    return canonicalize_annotation(raw_tag)


def parse_tag(tag, strict=True):
    """Parse ``Attr=VAL;Attr=VAL`` into a dict, canonicalizing each value.

    Rejected annotations drop that attribute from the result. With
    ``strict=False`` a cross-attribute conjunction is dropped the same way
    instead of raising.
    """
    out = {}
    tag = tag.strip()
    if not tag or tag == "_":
        return out
    for item in tag.split(";"):
        item = item.strip()
        if not item:
            continue
        attr, sep, value = item.partition("=")
        attr = attr.strip()
        if not sep or not attr:
            raise InvalidTag(f"malformed attribute=value pair {item!r}")
        if attr in out:
            raise InvalidTag(f"attribute {attr!r} occurs twice in {tag!r}")
        try:
            canon = canonicalize_annotation(value, attr)
        except InvalidTag:
            if strict:
                raise
            canon = None
        if canon is not None:
            out[attr] = canon
    return out


def parse_unimorph_bundle(bundle):
    """Group a UniMorph feature bundle (``V;PST;3;SG``) by attribute.

    Unknown and language-specific features are dropped; an attribute whose
    annotation is rejected is left out.
    """
    out = {}
    for item in bundle.split(";"):
        item = item.strip()
        if not item:
            continue
        try:
            canon = canonicalize_annotation(item)
        except InvalidTag:
            continue
        if canon is None:
            continue
        first = canon.split("+")[0]
        attr = SPECIAL_VALUES.get(frozenset(canon.split("+")), (attribute_of(first),))[0]
        if attr is None:
            continue
        out[attr] = canon
    return out

"""
Atributos de texto das narrativas: filtro de narrativas inválidas,
pré-processamento, TF-IDF com n-gramas e redução por SVD truncada.

Variante TF-IDF fixada: contagem bruta, idf suavizado
idf(t) = ln((1 + N) / (1 + df(t))) + 1 e normalização L2.
"""
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from sklearn.utils.extmath import randomized_svd, svd_flip

from core.errors import DimensionError, EmptyVocabularyError, SchemaError, VaForgeError
from core.features import FeatureMatrix

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "config"
STOPWORDS_FILE = DATA_DIR / "stopwords.txt"
LEMMAS_FILE = DATA_DIR / "lemmas.txt"

ARTIFACT_VERSION = 1
EXACT_SVD_MAX_DIM = 512

INVALID_NARRATIVES = frozenset({
    "nothing",
    "done",
    "folder empty",
    "photo cannot be read",
    "unclear photo",
    "no preview available",
    "va number does not match",
})

_PUNCTUATION = re.compile(r"[^\w\s]+", re.UNICODE)
_WHITESPACE = re.compile(r"\s+")


def _normalize_sentinel(text: str) -> str:
    text = _WHITESPACE.sub(" ", (text or "").lower()).strip()
    return text.strip(" .,;:!?\"'")


def is_invalid_narrative(text: Optional[str]) -> bool:
    """Narrativa vazia ou composta só por um dos textos-sentinela da digitalização."""
    normalized = _normalize_sentinel(text or "")
    return not normalized or normalized in INVALID_NARRATIVES


def load_word_list(path: Union[str, Path] = STOPWORDS_FILE) -> FrozenSet[str]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        words = {line.strip().lower() for line in f if line.strip() and not line.startswith("#")}
    logger.debug(f"[TFIDF] {len(words)} stopwords carregadas de {path.name}")
    return frozenset(words)


def load_lemma_table(path: Union[str, Path] = LEMMAS_FILE) -> Dict[str, str]:
    """Tabela ``flexão<TAB>forma base``, uma entrada por linha."""
    path = Path(path)
    table: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SchemaError(f"{path.name} linha {line_no}: esperado 'flexão base'")
            table[parts[0].lower()] = parts[1].lower()
    return table


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    remove_stopwords: bool = True
    lemmatize: bool = True
    stopword_list: FrozenSet[str] = field(default_factory=frozenset)
    lemma_table: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stopword_list", frozenset(self.stopword_list))
        if self.remove_stopwords and not self.stopword_list:
            raise VaForgeError("remove_stopwords exige uma lista de stopwords não vazia")

    @classmethod
    def default(cls, **overrides) -> "PreprocessConfig":
        """Configuração com a lista de stopwords e a tabela de lemas embarcadas."""
        overrides.setdefault("stopword_list", load_word_list())
        overrides.setdefault("lemma_table", load_lemma_table())
        return cls(**overrides)

    @classmethod
    def passthrough(cls) -> "PreprocessConfig":
        return cls(False, False, False, False, False)

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "collapse_whitespace": self.collapse_whitespace,
            "remove_stopwords": self.remove_stopwords,
            "lemmatize": self.lemmatize,
            "stopword_list": sorted(self.stopword_list),
            "lemma_table": dict(sorted(self.lemma_table.items())),
        }


# (sufixo, substituto, tamanho mínimo do radical)
_SUFFIX_RULES = (
    ("ies", "y", 3),
    ("ing", "", 4),
    ("ed", "", 4),
    ("s", "", 4),
)
_NO_STRIP_ENDINGS = ("ss", "us", "is")


def _suffix_step(word: str) -> str:
    if word.endswith(_NO_STRIP_ENDINGS):
        return word
    for suffix, replacement, min_stem in _SUFFIX_RULES:
        if word.endswith(suffix) and len(word) - len(suffix) >= min_stem:
            return word[: len(word) - len(suffix)] + replacement
    return word


def lemmatize_word(word: str, table: Dict[str, str]) -> str:
    """Tabela de lemas e, na falta dela, stemmer de sufixos conservador.

    Aplicado até o ponto fixo, de modo que lemmatize(lemmatize(w)) == lemmatize(w).
    """
    seen = {word}
    while True:
        nxt = table.get(word) or _suffix_step(word)
        if nxt == word or nxt in seen:
            return word
        seen.add(nxt)
        word = nxt


def preprocess(text: Optional[str], cfg: PreprocessConfig) -> List[str]:
    """lowercase → pontuação → espaços → tokenização → stopwords → lematização."""
    text = text or ""
    if cfg.lowercase:
        text = text.lower()
    if cfg.strip_punctuation:
        text = _PUNCTUATION.sub(" ", text)
    if cfg.collapse_whitespace:
        text = _WHITESPACE.sub(" ", text).strip()
    tokens = text.split()
    if cfg.remove_stopwords:
        tokens = [t for t in tokens if t not in cfg.stopword_list]
    if cfg.lemmatize:
        tokens = [lemmatize_word(t, cfg.lemma_table) for t in tokens]
        if cfg.remove_stopwords:
            tokens = [t for t in tokens if t not in cfg.stopword_list]
    return tokens


def ngrams(tokens: Sequence[str], ngram_range: Tuple[int, int]) -> List[str]:
    lo, hi = ngram_range
    grams = []
    for n in range(lo, hi + 1):
        grams.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return grams


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Dict[str, int]
    doc_freq: Tuple[int, ...]
    n_docs: int
    ngram_range: Tuple[int, int] = (1, 2)
    min_df: int = 2
    max_features: Optional[int] = None
    idf_variant: str = "smooth"

    @cached_property
    def terms(self) -> List[str]:
        terms = [""] * len(self.vocabulary)
        for term, idx in self.vocabulary.items():
            terms[idx] = term
        return terms

    @cached_property
    def idf(self) -> np.ndarray:
        df = np.asarray(self.doc_freq, dtype=np.float64)
        return np.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0

    def to_dict(self) -> dict:
        return {
            "terms": self.terms,
            "doc_freq": list(self.doc_freq),
            "n_docs": self.n_docs,
            "ngram_range": list(self.ngram_range),
            "min_df": self.min_df,
            "max_features": self.max_features,
            "idf_variant": self.idf_variant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TfidfModel":
        return cls(
            vocabulary={t: i for i, t in enumerate(data["terms"])},
            doc_freq=tuple(data["doc_freq"]),
            n_docs=int(data["n_docs"]),
            ngram_range=tuple(data["ngram_range"]),
            min_df=int(data["min_df"]),
            max_features=data.get("max_features"),
            idf_variant=data.get("idf_variant", "smooth"),
        )


def fit_tfidf(corpus: Sequence[Sequence[str]], ngram_range: Tuple[int, int] = (1, 2),
              min_df: int = 2, max_features: Optional[int] = None) -> TfidfModel:
    if not corpus:
        raise EmptyVocabularyError("corpus vazio")
    lo, hi = ngram_range
    if not 1 <= lo <= hi:
        raise VaForgeError(f"ngram_range inválido: {ngram_range}")

    df: Counter = Counter()
    for doc in corpus:
        df.update(set(ngrams(doc, ngram_range)))

    kept = [t for t, count in df.items() if count >= min_df]
    if not kept:
        raise EmptyVocabularyError(f"nenhum n-grama com df >= {min_df} em {len(corpus)} documentos")
    if max_features is not None and len(kept) > max_features:
        kept = sorted(kept, key=lambda t: (-df[t], t))[:max_features]
    kept.sort()

    model = TfidfModel(
        vocabulary={t: i for i, t in enumerate(kept)},
        doc_freq=tuple(df[t] for t in kept),
        n_docs=len(corpus),
        ngram_range=(lo, hi),
        min_df=min_df,
        max_features=max_features,
    )
    logger.info(f"[TFIDF] Vocabulário com {len(kept)} n-gramas ({lo},{hi}) de {len(corpus)} documentos")
    return model


def transform_tfidf(model: TfidfModel, doc: Sequence[str]) -> sparse.csr_matrix:
    """Vetor 1×V esparso: tf·idf normalizado em L2; n-gramas fora do vocabulário são ignorados."""
    counts = Counter(model.vocabulary[g] for g in ngrams(doc, model.ngram_range) if g in model.vocabulary)
    cols = sorted(counts)
    idf = model.idf
    data = np.array([counts[c] * idf[c] for c in cols], dtype=np.float64)
    norm = np.linalg.norm(data)
    if norm > 0:
        data = data / norm
    return sparse.csr_matrix((data, ([0] * len(cols), cols)), shape=(1, len(model.vocabulary)))


def transform_corpus(model: TfidfModel, corpus: Sequence[Sequence[str]]) -> sparse.csr_matrix:
    if not corpus:
        return sparse.csr_matrix((0, len(model.vocabulary)))
    return sparse.vstack([transform_tfidf(model, doc) for doc in corpus], format="csr")


@dataclass(frozen=True, eq=False)
class SvdModel:
    components: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self) -> int:
        return int(self.components.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.components.shape[1])


def _as_matrix(X):
    if isinstance(X, FeatureMatrix):
        return X.values
    if sparse.issparse(X):
        return X
    return np.asarray(X, dtype=np.float64)


def fit_svd(X, k: int, seed: int = 0, n_iter: int = 4, n_oversamples: int = 10) -> SvdModel:
    """SVD truncada: exata (densa) para D <= 512, randomizada acima disso."""
    M = _as_matrix(X)
    n, d = M.shape
    if not 1 <= k <= min(n, d):
        raise DimensionError(f"k={k} fora de [1, min(N={n}, D={d})]")

    if d <= EXACT_SVD_MAX_DIM:
        dense = M.toarray() if sparse.issparse(M) else M
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
        u, s, vt = u[:, :k], s[:k], vt[:k]
    else:
        u, s, vt = randomized_svd(M, n_components=k, n_oversamples=n_oversamples,
                                  n_iter=n_iter, random_state=seed)
    _, vt = svd_flip(u, vt, u_based_decision=False)
    logger.info(f"[SVD] {k} componentes de uma matriz {n}x{d}")
    return SvdModel(np.ascontiguousarray(vt), np.asarray(s, dtype=np.float64))


def transform_svd(model: SvdModel, X):
    M = _as_matrix(X)
    if M.shape[1] != model.n_features:
        raise DimensionError(f"esperado {model.n_features} colunas, recebeu {M.shape[1]}")
    projected = np.asarray(M @ model.components.T)
    if isinstance(X, FeatureMatrix):
        return FeatureMatrix(X.ids, tuple(f"svd_{i}" for i in range(model.k)), projected)
    return projected


def top_ngrams_per_component(tfidf: TfidfModel, svd: SvdModel, n: int = 10) -> List[dict]:
    """N-gramas com maior carga (em módulo) em cada componente."""
    terms = tfidf.terms
    report = []
    for comp in range(svd.k):
        loadings = svd.components[comp]
        order = sorted(range(len(terms)), key=lambda j: (-abs(loadings[j]), terms[j]))[:n]
        report.append({
            "component": f"svd_{comp}",
            "ngrams": [{"ngram": terms[j], "loading": float(loadings[j])} for j in order],
        })
    return report


class TextFeaturizer:
    """Pipeline narrativa → tokens → TF-IDF → SVD, com colunas ``svd_i``."""

    def __init__(self, cfg: Optional[PreprocessConfig] = None, ngram_range: Tuple[int, int] = (1, 2),
                 min_df: int = 2, max_features: Optional[int] = None, k: int = 450, seed: int = 0):
        self.cfg = cfg or PreprocessConfig.default()
        self.ngram_range = tuple(ngram_range)
        self.min_df = min_df
        self.max_features = max_features
        self.k = k
        self.seed = seed
        self.tfidf: Optional[TfidfModel] = None
        self.svd: Optional[SvdModel] = None

    def _tokens(self, texts: Sequence[str]) -> List[List[str]]:
        return [preprocess(t, self.cfg) for t in texts]

    def fit(self, ids: Sequence[str], texts: Sequence[str]) -> "TextFeaturizer":
        corpus = self._tokens(texts)
        self.tfidf = fit_tfidf(corpus, self.ngram_range, self.min_df, self.max_features)
        X = transform_corpus(self.tfidf, corpus)
        k = min(self.k, X.shape[0], X.shape[1])
        if k < self.k:
            logger.warning(f"[SVD] k={self.k} reduzido para {k} (N={X.shape[0]}, V={X.shape[1]})")
        self.svd = fit_svd(X, k, seed=self.seed)
        return self

    def transform(self, ids: Sequence[str], texts: Sequence[str]) -> FeatureMatrix:
        if self.tfidf is None or self.svd is None:
            raise VaForgeError("TextFeaturizer não ajustado")
        X = transform_corpus(self.tfidf, self._tokens(texts))
        values = transform_svd(self.svd, X)
        return FeatureMatrix(tuple(ids), tuple(f"svd_{i}" for i in range(self.svd.k)), values)

    def fit_transform(self, ids: Sequence[str], texts: Sequence[str]) -> FeatureMatrix:
        return self.fit(ids, texts).transform(ids, texts)

    def to_dict(self) -> dict:
        if self.tfidf is None or self.svd is None:
            raise VaForgeError("TextFeaturizer não ajustado")
        return {
            "version": ARTIFACT_VERSION,
            "kind": "text_featurizer",
            "preprocess": self.cfg.to_dict(),
            "k": self.k,
            "seed": self.seed,
            "tfidf": self.tfidf.to_dict(),
            "svd": {
                "components": self.svd.components.tolist(),
                "singular_values": self.svd.singular_values.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TextFeaturizer":
        if data.get("version") != ARTIFACT_VERSION or data.get("kind") != "text_featurizer":
            raise SchemaError(f"artefato de texto incompatível: versão {data.get('version')}")
        pre = dict(data["preprocess"])
        cfg = PreprocessConfig(**{**pre, "stopword_list": frozenset(pre["stopword_list"])})
        tfidf = TfidfModel.from_dict(data["tfidf"])
        featurizer = cls(cfg, tfidf.ngram_range, tfidf.min_df, tfidf.max_features, data["k"], data["seed"])
        featurizer.tfidf = tfidf
        featurizer.svd = SvdModel(np.asarray(data["svd"]["components"], dtype=np.float64),
                                  np.asarray(data["svd"]["singular_values"], dtype=np.float64))
        return featurizer


def save_text_artifact(featurizer: TextFeaturizer, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(featurizer.to_dict(), f, ensure_ascii=False)
    logger.info(f"[TFIDF] Artefato de texto salvo em {path}")
    return path


def load_text_artifact(path: Union[str, Path]) -> TextFeaturizer:
    with open(path, "r", encoding="utf-8") as f:
        return TextFeaturizer.from_dict(json.load(f))

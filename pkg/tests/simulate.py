"""Seeded generators of censored survival data for the test suite."""

from datetime import datetime, timedelta
from xml.sax.saxutils import quoteattr

import numpy as np


def exponential_ph(rng, n, beta, x=None, censor_rate=0.0, base_rate=1.0):
    """Exponential baseline with ``h(t|x) = base_rate * exp(x @ beta)`` and
    independent exponential censoring."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if x is None:
        x = rng.normal(size=(n, beta.size))
    x = np.asarray(x, dtype=float).reshape(n, -1)
    rate = base_rate * np.exp(x @ beta)
    t = rng.exponential(1.0 / rate)
    if censor_rate > 0:
        c = rng.exponential(1.0 / censor_rate, size=n)
        return x, np.minimum(t, c), t <= c
    return x, t, np.ones(n, dtype=bool)


def sign_flip(rng, n, tau=np.log(2.0), effect=1.0):
    """One N(0,1) covariate whose log hazard ratio is +effect before ``tau``
    and -effect after it (unit baseline hazard)."""
    x = rng.normal(size=n)
    e = rng.exponential(size=n)
    early = np.exp(effect * x)
    late = np.exp(-effect * x)
    before = e < tau * early
    t = np.where(before, e / early, tau + (e - tau * early) / late)
    return x[:, None], t, np.ones(n, dtype=bool)


def feature_rows(rng, n, site="synth", base_rate=0.01, censor_rate=0.003,
                 hasexample_beta=-0.4, tagscount_beta=0.2, sumpeople_beta=0.3):
    """FeatureRow records with positive covariates and a known PH truth:
    log hazard = hasexample_beta * hasexample + tagscount_beta * tagscount
    + sumpeople_beta * log(sumpeople)."""
    from qasurv.ingest import FeatureRow

    hasexample = rng.random(n) < 0.4
    tagscount = rng.integers(1, 6, n)
    sumpeople = np.round(rng.lognormal(7, 1.0, n)).astype(int) + 1
    lp = hasexample_beta * hasexample + tagscount_beta * tagscount + sumpeople_beta * np.log(sumpeople)
    lp = lp - lp.mean()
    t = rng.exponential(1 / (base_rate * np.exp(lp)))
    c = rng.exponential(1 / censor_rate, n)
    time = np.round(np.maximum(np.minimum(t, c), 1e-3), 4)
    return [FeatureRow(i + 1, site, float(time[i]), bool(t[i] <= c[i]),
                       int(rng.integers(20, 3000)), int(rng.integers(10, 150)), bool(hasexample[i]),
                       int(tagscount[i]), int(sumpeople[i]), float(np.round(rng.normal(0, 2), 6)))
            for i in range(n)]


_WORDS = ("plot", "regex", "merge", "frame", "error", "install", "server", "config", "value",
          "list", "string", "package", "update", "kernel", "boot", "array", "query", "index")


def synthetic_posts(rng, n_questions, n_users=300, n_tags=20, body_words=(3.5, 0.8),
                    start=datetime(2012, 1, 1)):
    """Yield Posts-dump ``<row .../>`` lines for ``n_questions`` questions,
    each followed by its answers. Questions with code blocks and longer
    bodies get accepted answers sooner."""
    tags = [f"tag{k}" for k in range(n_tags)]
    tag_p = rng.dirichlet(np.ones(n_tags) * 0.7)
    next_id = 1
    for i in range(n_questions):
        qid = next_id
        created = start + timedelta(minutes=20 * i + float(rng.uniform(0, 19)))
        words = max(1, int(rng.lognormal(*body_words)))
        code = bool(rng.random() < 0.4)
        body = "<p>" + " ".join(rng.choice(_WORDS, words)) + "</p>"
        if code:
            body += "<pre><code>x = f(" + str(int(rng.integers(100))) + ")</code></pre>"
        title = " ".join(rng.choice(_WORDS, int(rng.integers(2, 9))))
        qtags = rng.choice(tags, int(rng.integers(1, 5)), replace=False, p=tag_p)
        rate = 0.01 * np.exp(-0.5 * code + 0.2 * np.log(words))
        n_answers = int(rng.poisson(1.5))
        answers = []
        for j in range(n_answers):
            answers.append((qid + 1 + j, created + timedelta(minutes=float(rng.exponential(1 / rate)) + 0.5),
                            int(rng.integers(1, n_users + 1))))
        next_id = qid + 1 + n_answers
        accepted = ""
        if answers and rng.random() < 0.7:
            accepted = f' AcceptedAnswerId="{min(answers, key=lambda a: a[1])[0]}"'
        closed = ' ClosedDate="2013-01-01T00:00:00.000"' if rng.random() < 0.03 else ""
        tag_attr = "".join(f"<{t}>" for t in qtags)
        yield (f'  <row Id="{qid}" PostTypeId="1"{accepted} CreationDate="{_ts(created)}"{closed} '
               f'OwnerUserId="{int(rng.integers(1, n_users + 1))}" Title={quoteattr(title)} '
               f'Body={quoteattr(body)} Tags={quoteattr(tag_attr)} />\n')
        for aid, when, user in answers:
            yield (f'  <row Id="{aid}" PostTypeId="2" ParentId="{qid}" CreationDate="{_ts(when)}" '
                   f'OwnerUserId="{user}" Body={quoteattr("<p>answer</p>")} />\n')


def _ts(when):
    return when.strftime("%Y-%m-%dT%H:%M:%S.") + f"{when.microsecond // 1000:03d}"


def synthetic_dump(seed, n_questions, **kwargs):
    """A complete Posts XML document as bytes."""
    rows = synthetic_posts(np.random.default_rng(seed), n_questions, **kwargs)
    return ('<?xml version="1.0" encoding="utf-8"?>\n<posts>\n' + "".join(rows) + "</posts>\n").encode()

"""Plain-text serialization of certificates and reduced models.

Matrices are written row-major with 17 significant digits so a round trip
reproduces the float64 values bit-exactly, making audits and re-runs of
the verification suite on serialized artifacts meaningful.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .certificate import Certificate
from .errors import DocumentFormatError
from .rom import Rom

CERT_HEADER = "romcert certificate v1"
ROM_HEADER = "romcert rom v1"

_CERT_MATRICES = ("h_matrix", "p_matrix", "q_matrix", "qbar_matrix", "f_gain")
_ROM_MATRICES = ("a_hat", "b_hat", "theta", "xi", "psi")


def _write_matrix(lines: list[str], name: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(mat)
    lines.append(f"matrix {name} {mat.shape[0]} {mat.shape[1]}")
    for row in mat:
        lines.append(" ".join(f"{v:.17g}" for v in row))


def certificate_to_text(cert: Certificate) -> str:
    lines = [CERT_HEADER]
    lines.append(f"kappa_hat = {cert.kappa_hat:.17g}")
    lines.append(f"epsilon = {cert.epsilon:.17g}")
    lines.append(f"rho = {cert.rho:.17g}" if cert.rho is not None else "rho = none")
    for w in cert.warnings:
        lines.append(f"warning = {w}")
    for name in _CERT_MATRICES:
        _write_matrix(lines, name, getattr(cert, name))
    return "\n".join(lines) + "\n"


def rom_to_text(rom: Rom) -> str:
    lines = [ROM_HEADER]
    for name in _ROM_MATRICES:
        _write_matrix(lines, name, getattr(rom, name))
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> str:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise DocumentFormatError("unexpected end of document", line=self.pos + 1)
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect_key(self, key: str) -> str:
        line = self.next()
        if "=" not in line:
            raise DocumentFormatError(f"expected '{key} = ...'", line=self.pos, field=key)
        k, v = (part.strip() for part in line.split("=", 1))
        if k != key:
            raise DocumentFormatError(f"expected field {key!r}, found {k!r}", line=self.pos, field=key)
        return v

    def peek_is_key(self, key: str) -> bool:
        save = self.pos
        try:
            line = self.next()
        except DocumentFormatError:
            return False
        self.pos = save
        return line.split("=", 1)[0].strip() == key

    def read_matrix(self, name: str) -> np.ndarray:
        head = self.next().split()
        if len(head) != 4 or head[0] != "matrix" or head[1] != name:
            raise DocumentFormatError(f"expected 'matrix {name} <rows> <cols>'", line=self.pos, field=name)
        try:
            rows, cols = int(head[2]), int(head[3])
        except ValueError as exc:
            raise DocumentFormatError(f"bad matrix dimensions: {exc}", line=self.pos, field=name) from exc
        out = np.empty((rows, cols))
        for i in range(rows):
            parts = self.next().split()
            if len(parts) != cols:
                raise DocumentFormatError(
                    f"matrix {name} row {i} has {len(parts)} entries, expected {cols}", line=self.pos, field=name
                )
            try:
                out[i] = [float(p) for p in parts]
            except ValueError as exc:
                raise DocumentFormatError(f"non-numeric matrix entry: {exc}", line=self.pos, field=name) from exc
        return out


def certificate_from_text(text: str) -> Certificate:
    r = _Reader(text)
    if r.next().strip() != CERT_HEADER:
        raise DocumentFormatError(f"not a certificate document (missing {CERT_HEADER!r} header)", line=1)
    kappa_hat = float(r.expect_key("kappa_hat"))
    epsilon = float(r.expect_key("epsilon"))
    rho_raw = r.expect_key("rho")
    rho = None if rho_raw == "none" else float(rho_raw)
    warnings = []
    while r.peek_is_key("warning"):
        warnings.append(r.expect_key("warning"))
    mats = {name: r.read_matrix(name) for name in _CERT_MATRICES}
    return Certificate(
        h_matrix=mats["h_matrix"],
        p_matrix=mats["p_matrix"],
        q_matrix=mats["q_matrix"],
        qbar_matrix=mats["qbar_matrix"],
        f_gain=mats["f_gain"],
        kappa_hat=kappa_hat,
        epsilon=epsilon,
        rho=rho,
        warnings=tuple(warnings),
    )


def rom_from_text(text: str) -> Rom:
    r = _Reader(text)
    if r.next().strip() != ROM_HEADER:
        raise DocumentFormatError(f"not a rom document (missing {ROM_HEADER!r} header)", line=1)
    mats = {name: r.read_matrix(name) for name in _ROM_MATRICES}
    return Rom(a_hat=mats["a_hat"], b_hat=mats["b_hat"], theta=mats["theta"], xi=mats["xi"], psi=mats["psi"])


def save_certificate(cert: Certificate, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(certificate_to_text(cert))
    return path


def load_certificate(path: str | Path) -> Certificate:
    return certificate_from_text(Path(path).read_text())


def save_rom(rom: Rom, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(rom_to_text(rom))
    return path


def load_rom(path: str | Path) -> Rom:
    return rom_from_text(Path(path).read_text())

from typing import NamedTuple, Self

import numpy as np


class Square(NamedTuple):
    """
    One cell of the N x 8 heap matrix together with the neighbours the
    difference test looks at. A neighbour that falls outside the matrix is None.
    """
    x: int
    right: int | None
    below: int | None

    @classmethod
    def sample(cls, rows: np.ndarray, i: int, j: int) -> Self:
        n_rows, width = rows.shape
        return cls(
            x=int(rows[i][j]),
            right=int(rows[i][j + 1]) if j + 1 < width else None,
            below=int(rows[i + 1][j]) if i + 1 < n_rows else None,
        )

    def differs(self, bitwise: bool = False) -> bool:
        deltas = [
            abs(self.x - neighbour)
            for neighbour in (self.right, self.below)
            if neighbour is not None
        ]
        if not deltas:
            return False
        if len(deltas) == 1:
            return deltas[0] != 0
        if bitwise:
            return (deltas[0] & deltas[1]) != 0
        return deltas[0] != 0 and deltas[1] != 0

    @classmethod
    def iter_row(cls, rows: np.ndarray, i: int):
        for j in range(rows.shape[1]):
            yield cls.sample(rows, i, j)

from typing import Tuple, Union

import numpy as np


class RunningMeanStd(object):
    def __init__(self, shape: Tuple[int, ...] = ()):
        """
        Running mean and variance of a stream of Monte Carlo samples, merged chunk by chunk
        https://en.wikipedia.org/wiki/Algorithms_for_calculating_variance#Parallel_algorithm

        Unlike a normalisation filter the count starts at zero: the statistics are those of the
        samples actually seen, so that ``standard_error`` is an honest Monte Carlo error.

        :param shape: the shape of one sample
        """
        self.mean = np.zeros(shape, np.float64)
        self.var = np.zeros(shape, np.float64)
        self.count = 0

    def copy(self) -> "RunningMeanStd":
        """
        :return: Return a copy of the current object.
        """
        new_object = RunningMeanStd(shape=self.mean.shape)
        new_object.mean = self.mean.copy()
        new_object.var = self.var.copy()
        new_object.count = int(self.count)
        return new_object

    def combine(self, other: "RunningMeanStd") -> None:
        """
        Merge the statistics of another chunk.

        :param other: The other object to combine with.
        """
        self.update_from_moments(other.mean, other.var, other.count)

    def update(self, arr: np.ndarray) -> None:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape[0] == 0:
            return
        self.update_from_moments(np.mean(arr, axis=0), np.var(arr, axis=0), arr.shape[0])

    def update_from_moments(self, batch_mean: np.ndarray, batch_var: np.ndarray, batch_count: Union[int, float]) -> None:
        if batch_count == 0:
            return
        if self.count == 0:
            self.mean = np.array(batch_mean, dtype=np.float64)
            self.var = np.array(batch_var, dtype=np.float64)
            self.count = batch_count
            return
        delta = batch_mean - self.mean
        tot_count = self.count + batch_count

        new_mean = self.mean + delta * batch_count / tot_count
        m_a = self.var * self.count
        m_b = batch_var * batch_count
        m_2 = m_a + m_b + np.square(delta) * self.count * batch_count / tot_count

        self.mean = new_mean
        self.var = m_2 / tot_count
        self.count = tot_count

    @property
    def standard_error(self) -> np.ndarray:
        """
        Standard error of the mean, using the unbiased variance.
        """
        if self.count < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.var * self.count / (self.count - 1) / self.count)

// Manipulability ellipsoid geometry from the server-provided eigendecomposition
// of the 3x3 translational J J^T. Semi-axis lengths are sqrt(eigenvalue);
// near a singularity the smallest axis collapses and the ellipse degenerates.

export interface EllipsoidShape {
  // semi-axis lengths, ascending
  radii: [number, number, number];
  // matching unit axes, row per radius
  axes: [number[], number[], number[]];
  // smallest / largest semi-axis; ~0 means visibly degenerate
  minorAxisRatio: number;
}

export function ellipsoidFromEigen(
  eigenvalues: number[],
  axes: number[][],
  scale = 1.0,
): EllipsoidShape {
  if (eigenvalues.length !== 3 || axes.length !== 3) {
    throw new Error('manipulability payload must carry 3 eigenvalues and 3 axes');
  }
  const order = [0, 1, 2].sort((a, b) => eigenvalues[a] - eigenvalues[b]);
  const radii = order.map((i) => Math.sqrt(Math.max(eigenvalues[i], 0)) * scale) as [
    number,
    number,
    number,
  ];
  const sorted = order.map((i) => axes[i]) as [number[], number[], number[]];
  const ratio = radii[2] > 0 ? radii[0] / radii[2] : 0;
  return { radii, axes: sorted, minorAxisRatio: ratio };
}

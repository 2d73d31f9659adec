// Display mirror of the wrench's LED bar: segments fill with applied/target
// and the whole bar turns red once the target has been reached.

export const LED_SEGMENTS = 10;

export function ledSegments(appliedCnm: number, targetCnm: number): number {
  if (targetCnm <= 0) return 0;
  const clamped = Math.min(appliedCnm, targetCnm);
  return Math.floor((clamped * LED_SEGMENTS) / targetCnm);
}

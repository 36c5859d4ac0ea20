void FUN_004012a4(long param_1,long param_2,long param_3,int param_4)
{
  int local_14;
  int local_10;
  int local_c;
  int local_8;

  for (local_c = 0; local_c < param_4; local_c = local_c + 1) {
    for (local_10 = 0; local_10 < param_4; local_10 = local_10 + 1) {
      local_14 = 0;
      for (local_8 = 0; local_8 < param_4; local_8 = local_8 + 1) {
        local_14 = local_14 +
                   *(int *)(param_1 + (long)(local_c * param_4 + local_8) * 4) *
                   *(int *)(param_2 + (long)(local_8 * param_4 + local_10) * 4);
      }
      *(int *)(param_3 + (long)(local_c * param_4 + local_10) * 4) = local_14;
    }
  }
  return;
}
